"""Closed-loop simulation under event-, self- and periodic triggering, plus the
runtime checks on the dynamic variable and the looped functional."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .ets_design import EtsDesign, EtsParams
from .sts import LiftCache, StsParams, gamma_data, gamma_model
from .sysdata import LtiModel


@dataclass
class TriggerTrace:
    """Per-step record of one closed-loop run (``x`` has ``horizon + 1`` rows)."""

    mode: str
    horizon: int
    x: np.ndarray
    u: np.ndarray
    xk: np.ndarray
    sampled: np.ndarray
    transmitted: np.ndarray
    eta: np.ndarray
    rho: np.ndarray
    cond: np.ndarray
    h: int = 1
    intervals: list = field(default_factory=list)

    @property
    def transmission_times(self) -> np.ndarray:
        return np.flatnonzero(self.transmitted)

    @property
    def sampling_times(self) -> np.ndarray:
        return np.flatnonzero(self.sampled)

    @property
    def n_transmissions(self) -> int:
        return int(self.transmitted.sum())

    @property
    def n_samples(self) -> int:
        return int(self.sampled.sum())

    def write_csv(self, path) -> None:
        n, m = self.x.shape[1], self.u.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)]
                       + ["transmitted", "sampled", "eta"])
            for t in range(self.horizon):
                w.writerow([t] + [repr(float(v)) for v in self.x[t]] + [repr(float(v)) for v in self.u[t]]
                           + [int(self.transmitted[t]), int(self.sampled[t]), repr(float(self.eta[t]))])
            w.writerow([self.horizon] + [repr(float(v)) for v in self.x[self.horizon]]
                       + [""] * m + ["", "", ""])

    def plot_rows(self, every: int = 1):
        """Downsampled ``(t, |x|, eta, transmitted)`` rows."""
        nx = np.linalg.norm(self.x[:-1], axis=1)
        return [(t, float(nx[t]), float(self.eta[t]), int(self.transmitted[t]))
                for t in range(0, self.horizon, every)]

    def summary(self) -> dict:
        return {"mode": self.mode, "horizon": self.horizon, "h": self.h,
                "transmissions": self.n_transmissions, "samples": self.n_samples,
                "final_norm": float(np.linalg.norm(self.x[-1])),
                "eta_min": float(np.nanmin(self.eta)) if self.eta.size else 0.0}


@dataclass
class ProbeReport:
    eta_min: float
    boundary_max: float
    decrease: list
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_json(self) -> str:
        return json.dumps(asdict(self) | {"passed": self.passed})


def _inputs(K, xk):
    return xk @ np.atleast_2d(K).T


def run_ets(model: LtiModel, design: EtsDesign, params: EtsParams, x0, horizon: int,
            probes: bool = True):
    """Simulate the dynamic event-triggered loop.

    ``params`` is read duck-typed (``runtime_h``, ``s1``, ``s2``, ``lam``,
    ``theta``, ``eta0``, ``periodic``) so harnesses can pass unvalidated
    parameter sets.
    """
    h = int(params.runtime_h)
    x, xk, smp, trn, eta, rho, cond = kernels.ets_loop(
        model.A, model.B, design.K, design.Omega, np.asarray(x0, dtype=float), int(horizon), h,
        float(params.s1), float(params.s2), float(params.lam), float(params.theta),
        float(params.eta0), bool(params.periodic))
    tt = np.flatnonzero(trn)
    trace = TriggerTrace("periodic" if params.periodic else "ets", int(horizon), x,
                         _inputs(design.K, xk), xk, smp, trn, eta, rho, cond, h,
                         np.diff(tt).tolist())
    report = probe_dlf(model, design, params, trace) if probes else None
    return trace, report


def run_sts(model: LtiModel, params: StsParams, x0, horizon: int, cache: LiftCache | None = None):
    """Self-triggered loop; ``cache`` selects the data-driven interval rule,
    ``None`` the model-based one.  The rule only sees the transmitted state."""
    n = model.n
    x = np.empty((horizon + 1, n))
    x[0] = x0
    xk_hist = np.empty((horizon, n))
    trn = np.zeros(horizon, dtype=np.int8)
    intervals = []
    BK = model.B @ params.K
    next_t = 0
    xk = x[0]
    for t in range(horizon):
        if t == next_t:
            xk = x[t].copy()
            trn[t] = 1
            s = gamma_data(cache, params, xk) if cache is not None else gamma_model(model, params, xk)
            intervals.append(int(s))
            next_t = t + s
        xk_hist[t] = xk
        x[t + 1] = model.A @ x[t] + BK @ xk
    nan = np.full(horizon, np.nan)
    return TriggerTrace("sts-data" if cache is not None else "sts-model", horizon, x,
                        _inputs(params.K, xk_hist), xk_hist, trn.copy(), trn, np.zeros(horizon),
                        nan, nan.copy(), params.step, intervals)


def probe_lemma2(trace: TriggerTrace, tol: float = 1e-12):
    """Non-negativity of the dynamic variable at sampling instants.

    Returns ``(passed, first_violation_time or None)``."""
    ts = trace.sampling_times
    bad = ts[trace.eta[ts] < -tol]
    return (bad.size == 0, int(bad[0]) if bad.size else None)


def probe_dlf(model: LtiModel, design: EtsDesign, params, trace: TriggerTrace,
              boundary_tol: float = 1e-10, rel_tol: float = 1e-12) -> ProbeReport:
    """Looped-functional boundary values and the certified decrease of
    ``x'Px + h eta`` across consecutive sampling instants."""
    P, R1, R2, S = design.functional_matrices()
    h = trace.h
    ts = trace.sampling_times
    violations = []
    ok2, first = probe_lemma2(trace)
    if not ok2:
        violations.append({"kind": "eta_negative", "t": first})
    bmax = 0.0
    for t0 in ts:
        if t0 + h > trace.horizon:
            break
        vals = kernels.dlf_segment(trace.x[t0:t0 + h + 1], S, R1, R2)
        b = max(abs(vals[0]), abs(vals[-1]))
        bmax = max(bmax, b)
        if b > boundary_tol:
            violations.append({"kind": "dlf_boundary", "t": int(t0), "value": float(b)})
    dec = []
    for t0 in ts:
        t1 = t0 + h
        if t1 >= trace.horizon:
            break
        xa, xb = trace.x[t0], trace.x[t1]
        wa = float(xa @ P @ xa + h * trace.eta[t0])
        wb = float(xb @ P @ xb + h * trace.eta[t1])
        dec.append(wa)
        if np.any(xa) and wb - wa > rel_tol * abs(wa):
            violations.append({"kind": "no_decrease", "t": int(t0), "before": wa, "after": wb})
    eta_s = trace.eta[ts] if ts.size else np.zeros(1)
    return ProbeReport(float(eta_s.min()), float(bmax), dec, violations)


def lemma4_terms(Rm, N, vt, xs):
    """Both sides of the summation inequality for one draw.

    ``xs`` holds ``x(alpha) .. x(beta)``; returns ``(lhs, rhs)``."""
    xs = np.asarray(xs, dtype=float)
    span = xs.shape[0] - 1
    y = np.diff(xs, axis=0)
    lhs = -float(np.einsum("ij,jk,ik->", y, Rm, y))
    mean = xs.sum(axis=0) / (span + 1)
    Pi = np.concatenate([xs[-1] - xs[0], xs[-1] + xs[0] - 2.0 * mean])
    n = Rm.shape[0]
    Rb = np.zeros((2 * n, 2 * n))
    Rb[:n, :n] = Rm
    Rb[n:, n:] = 3.0 * Rm
    Nv = N.T @ vt
    rhs = span * float(Nv @ np.linalg.solve(Rb, Nv)) + 2.0 * float(Nv @ Pi)
    return lhs, rhs


def property_lemma4(seed: int, trials: int, max_n: int = 4, max_span: int = 12, slack: float = 1e-9):
    """Randomized check of the summation inequality; returns ``(violations, worst_gap)``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    viol, worst = 0, -np.inf
    for _ in range(trials):
        n = int(rng.integers(1, max_n + 1))
        k = int(rng.integers(1, 4))
        span = int(rng.integers(1, max_span + 1))
        M = rng.normal(size=(n, n))
        Rm = M @ M.T + 1e-2 * np.eye(n)
        N = rng.normal(size=(k * n, 2 * n))
        vt = rng.normal(size=k * n)
        xs = rng.normal(size=(span + 1, n)).cumsum(axis=0)
        lhs, rhs = lemma4_terms(Rm, N, vt, xs)
        gap = (lhs - rhs) / (1.0 + abs(lhs) + abs(rhs))
        worst = max(worst, gap)
        if lhs - rhs > slack * (1.0 + abs(lhs) + abs(rhs)):
            viol += 1
    return viol, float(worst)


__all__ = ["TriggerTrace", "ProbeReport", "run_ets", "run_sts", "probe_lemma2", "probe_dlf",
           "property_lemma4", "lemma4_terms"]
