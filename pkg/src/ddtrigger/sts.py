"""Self-triggered transmission: predict the next transmission from ``x(t_k)``.

The waiting condition at horizon ``s`` is

    sigma1 x_s' Om x_s + sigma2 x_k' Om x_k - (x_s - x_k)' Om (x_s - x_k) >= 0,
    x_s = (A^s + [A^{s-1}B ... B] [K; ...; K]) x_k.

The model-based rule evaluates it with known matrices.  The data-driven rule
certifies it for every lifted pair consistent with the data through a scalar
multiplier ``gamma`` (:func:`q_data_check`).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import kernels
from .matrixcore import symmetrize
from .sysdata import (DataRep, ExperimentData, LtiModel, NoiseBound, box_noise_bound,
                      consistent_set_bounds, lift_data, lifted_noise_bound, assemble_theta)


class SingularTheta(ValueError):
    pass


class InertiaMismatch(ValueError):
    pass


@dataclass(frozen=True)
class StsParams:
    """Trigger weights, gain, horizon cap and the candidate spacing ``step``
    (horizons are ``step, 2 step, ...`` up to ``s_bar``)."""

    sigma1: float
    sigma2: float
    Omega: np.ndarray
    K: np.ndarray
    s_bar: int = 50
    step: int = 1
    gamma_decades: float = 6.0
    gamma_points: int = 121

    def __post_init__(self):
        Om = symmetrize(np.atleast_2d(np.asarray(self.Omega, dtype=float)))
        object.__setattr__(self, "Omega", Om)
        object.__setattr__(self, "K", np.atleast_2d(np.asarray(self.K, dtype=float)))
        if np.linalg.eigvalsh(Om)[0] <= 0:
            raise ValueError("Omega must be positive definite")
        if self.s_bar < 1 or self.step < 1 or self.step > self.s_bar:
            raise ValueError("need 1 <= step <= s_bar")
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise ValueError("sigma1, sigma2 must be non-negative")

    @property
    def horizons(self):
        return list(range(self.step, self.s_bar + 1, self.step))


@dataclass(frozen=True)
class LiftedGain:
    s: int
    matrix: np.ndarray


def lifted_gain(K, s: int) -> LiftedGain:
    K = np.atleast_2d(K)
    return LiftedGain(s, np.vstack([K] * s))


# model based ----------------------------------------------------------------
def predicted_state(model: LtiModel, K, x_k, s: int) -> np.ndarray:
    x = np.asarray(x_k, dtype=float).copy()
    u = np.atleast_2d(K) @ x_k
    for _ in range(s):
        x = model.A @ x + model.B @ u
    return x


def _q_value(Om, s1, s2, xs, xk):
    e = xs - xk
    return float(s1 * xs @ Om @ xs + s2 * xk @ Om @ xk - e @ Om @ e)


def q_model(model: LtiModel, params: StsParams, x_k, s: int) -> float:
    """Value of the waiting condition; ``>= 0`` means waiting is allowed."""
    if s < 1:
        raise ValueError("s must be >= 1")
    x_k = np.asarray(x_k, dtype=float)
    xs = predicted_state(model, params.K, x_k, s)
    return _q_value(params.Omega, params.sigma1, params.sigma2, xs, x_k)


def _scan_rule(ok, horizons):
    """Largest horizon of the leading run of ``True`` values (at least the first)."""
    last = horizons[0]
    for flag, s in zip(ok, horizons):
        if not flag:
            return last
        last = s
    return last


def gamma_model(model: LtiModel, params: StsParams, x_k) -> int:
    x_k = np.asarray(x_k, dtype=float)
    vals = kernels.sts_scan(model.A, model.B @ params.K, params.Omega, x_k,
                            params.sigma1, params.sigma2, params.s_bar)
    hs = params.horizons
    return _scan_rule([vals[s - 1] >= 0 for s in hs], hs)


# data driven ----------------------------------------------------------------
@dataclass(frozen=True)
class DualRep:
    """Inverse-partition matrix for one lifted horizon."""

    s: int
    n: int
    p: int
    theta_tilde: np.ndarray


def dual_representation(rep: DataRep, s: int, cond_max: float = 1e12) -> DualRep:
    """Inverse partition of ``Theta^s`` in the sign arrangement of the dual set.

    With ``Q_c < 0`` and ``R_hat = R_c - S_c' Q_c^{-1} S_c > 0`` (the required
    inertia) the inverse blocks are ``R~ = R_hat^{-1}``, ``S~ = Z_c' R_hat^{-1}``
    and ``Q~ = Q_c^{-1} + Z_c' R_hat^{-1} Z_c`` with ``Z_c = -S_c' Q_c^{-1}``;
    these are formed block-wise because ``Theta^s`` itself is badly scaled.
    """
    Q, S, R = rep.Q_c, rep.S_c, rep.R_c
    wq = np.linalg.eigvalsh(Q)
    if wq[-1] >= 0:
        raise InertiaMismatch("Q_c is not negative definite")
    if wq[0] / wq[-1] > cond_max:
        raise SingularTheta(f"cond(Q_c) = {wq[0] / wq[-1]:.3e}")
    Qi = np.linalg.inv(Q)
    Zc = -S.T @ Qi
    Rh = symmetrize(R - S.T @ Qi @ S)
    wr = np.linalg.eigvalsh(Rh)
    if wr[0] <= 0:
        raise InertiaMismatch("Theta^s does not have the required number of positive eigenvalues")
    if wr[-1] / wr[0] > cond_max:
        raise SingularTheta(f"cond(R_hat) = {wr[-1] / wr[0]:.3e}")
    Rt = np.linalg.inv(Rh)
    St = Zc.T @ Rt
    Qt = symmetrize(Qi + Zc.T @ Rt @ Zc)
    TT = np.block([[-Rt, St.T], [St, -Qt]])
    return DualRep(s, rep.n, rep.p, symmetrize(TT))


def _q_tilde(params: StsParams, xk):
    n = xk.size
    Om = params.Omega
    Mid = np.block([[(params.sigma1 - 1) * Om, Om], [Om, (params.sigma2 - 1) * Om]])
    E = np.zeros((n + 1, 2 * n))
    E[:n, :n] = np.eye(n)
    E[n, n:] = xk
    return symmetrize(E @ Mid @ E.T)


def _g_tilde(dual: DualRep, params: StsParams, xk):
    n, p = dual.n, dual.p
    zeta = np.concatenate([xk, lifted_gain(params.K, dual.s).matrix @ xk])
    if zeta.size != p:
        raise ValueError("lifted representation does not match the gain dimensions")
    E = np.zeros((n + 1, n + p))
    E[:n, :n] = np.eye(n)
    E[n, n:] = zeta
    return symmetrize(E @ dual.theta_tilde @ E.T)


def q_data_check(dual: DualRep, params: StsParams, x_k, s: int, gamma: float,
                 tol: float = 1e-12) -> bool:
    """Whether ``Q~(x_k) - gamma G~^s(x_k) >= 0``."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if dual.s != s:
        raise ValueError(f"representation is for horizon {dual.s}, not {s}")
    xk = np.asarray(x_k, dtype=float)
    M = _q_tilde(params, xk) - gamma * _g_tilde(dual, params, xk)
    w = np.linalg.eigvalsh(M)
    return bool(w[0] >= -tol * (1.0 + abs(w[-1])))


def certify(dual: DualRep, params: StsParams, x_k):
    """Search ``gamma > 0`` maximizing ``lambda_min(Q~ - gamma G~)``.

    The objective is concave in ``gamma``; a log grid brackets the maximizer
    and a bounded scalar search refines it.  Returns ``(certified, gamma)``.
    """
    xk = np.asarray(x_k, dtype=float)
    nx = np.linalg.norm(xk)
    if nx == 0:
        return True, 1.0
    xk = xk / nx                       # the condition is homogeneous in x_k
    Qt = _q_tilde(params, xk)
    Gt = _g_tilde(dual, params, xk)
    scale = np.linalg.norm(Qt, 2) / max(np.linalg.norm(Gt, 2), 1e-300)
    d = params.gamma_decades
    grid = scale * np.logspace(-d, d, params.gamma_points)
    lam = np.linalg.eigvalsh(Qt[None] - grid[:, None, None] * Gt[None])[:, 0]
    i = int(np.argmax(lam))
    best_g, best = grid[i], lam[i]
    if best < 0:
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, grid.size - 1)]
        if hi > lo:
            res = minimize_scalar(lambda g: -np.linalg.eigvalsh(Qt - g * Gt)[0],
                                  bounds=(lo, hi), method="bounded",
                                  options={"xatol": lo * 1e-10})
            if -res.fun > best:
                best_g, best = float(res.x), -float(res.fun)
    ok = q_data_check(dual, params, xk, dual.s, best_g)
    return ok, float(best_g)


@dataclass
class LiftCache:
    """Prepared dual representations keyed by horizon."""

    duals: dict
    meta: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    def save(self, path):
        arrays = {f"s{s}": d.theta_tilde for s, d in self.duals.items()}
        info = {"meta": self.meta, "failures": self.failures,
                "shapes": {s: [d.n, d.p] for s, d in self.duals.items()}}
        np.savez_compressed(path, info=json.dumps(info), **arrays)

    @classmethod
    def load(cls, path) -> "LiftCache":
        z = np.load(path, allow_pickle=False)
        info = json.loads(str(z["info"]))
        duals = {int(s): DualRep(int(s), n, p, z[f"s{s}"]) for s, (n, p) in info["shapes"].items()}
        return cls(duals, info["meta"], {int(k): v for k, v in info["failures"].items()})


def prepare_lifted(data: ExperimentData, wbar: float, s_bar: int, horizons=None) -> LiftCache:
    """Build the dual representations for ``s = 1..s_bar`` (or ``horizons``).

    ``wbar`` is the box half-width of the disturbance; the lifted bound uses
    the pointwise norm ``wbar * sqrt(n_w)``, which the box always respects.
    """
    base = box_noise_bound(wbar, data.rho, data.n_w)
    rep1 = assemble_theta(data, base)
    norm_A = consistent_set_bounds(rep1).norm_A
    wpt = wbar * np.sqrt(data.n_w)
    duals, failures = {}, {}
    for s in (horizons or range(1, s_bar + 1)):
        bound = lifted_noise_bound(wpt, data, base, s, norm_A=norm_A)
        rep = lift_data(data, s, bound).rep
        try:
            duals[s] = dual_representation(rep, s)
        except (SingularTheta, InertiaMismatch) as exc:
            failures[s] = str(exc)
    meta = {"digest": data.digest(), "s_bar": s_bar, "wbar": wbar, "rho": data.rho,
            "norm_A": norm_A, "seed": data.seed}
    return LiftCache(duals, meta, failures)


def gamma_data(cache: LiftCache, params: StsParams, x_k) -> int:
    """Data-driven next interval; horizons without a usable representation
    count as not certified."""
    xk = np.asarray(x_k, dtype=float)
    hs = params.horizons
    if not np.any(xk):
        return hs[-1]
    ok = []
    for s in hs:
        d = cache.duals.get(s)
        flag = d is not None and certify(d, params, xk)[0]
        ok.append(flag)
        if not flag:
            break
    return _scan_rule(ok, hs)
