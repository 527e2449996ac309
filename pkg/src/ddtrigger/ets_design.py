"""LMI conditions for sampled-data loops under the dynamic event trigger.

Three builders share the looped-functional blocks assembled in
:func:`_functional_blocks`:

* :func:`build_theorem1` -- analysis for known ``(A, B)`` and a given gain;
* :func:`build_theorem2` -- joint design of gain and trigger matrix robust
  over every ``[A B]`` consistent with noisy data;
* :func:`build_model_codesign` -- the same joint design for a known model.

All builders accept one sampling bound ``h`` or a sequence of them; a full
certificate for ``h`` in ``[h_low, h_high]`` is the build at both endpoints.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from .lmi import (INFEASIBLE, STRICT, UNKNOWN, Affine, LmiProblem, NumericalBreakdown,
                  bmat, solve_feasibility, sym)
from .matrixcore import DimensionMismatch, selector, symmetrize
from .sysdata import DataRep, LtiModel


class NoFeasibleH(RuntimeError):
    pass


class SingularG(ValueError):
    pass


@dataclass(frozen=True)
class EtsParams:
    """Sampling bounds, trigger parameters and the descriptor ratio ``eps_d``.

    ``h`` is the runtime sampling interval (defaults to ``h_high``).  With
    ``periodic`` set the trigger degenerates to transmission at every sample:
    the sigma terms are forced to zero and the dynamic variable is dropped.
    """

    h_low: int = 1
    h_high: int = 1
    sigma1: float = 0.0
    sigma2: float = 0.0
    lam: float = 0.2
    theta: float = 2.0
    eta0: float = 0.0
    eps_d: float = 2.0
    h: int | None = None
    periodic: bool = False

    def __post_init__(self):
        self.validate()

    @property
    def runtime_h(self) -> int:
        return self.h_high if self.h is None else self.h

    @property
    def s1(self) -> float:
        return 0.0 if self.periodic else self.sigma1

    @property
    def s2(self) -> float:
        return 0.0 if self.periodic else self.sigma2

    def validate(self):
        if not (1 <= self.h_low <= self.runtime_h <= self.h_high):
            raise ValueError(f"need 1 <= h_low <= h <= h_high, got "
                             f"{self.h_low}, {self.runtime_h}, {self.h_high}")
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise ValueError("sigma1, sigma2 must be non-negative")
        if self.eta0 < 0:
            raise ValueError("eta0 must be non-negative")
        if not self.periodic:
            if self.lam <= 0 or self.theta <= 0:
                raise ValueError("lam and theta must be positive")
            if 1.0 - self.lam - 1.0 / self.theta < 0:
                raise ValueError("need 1 - lam - 1/theta >= 0")

    def with_h(self, h_low=None, h_high=None, h=None) -> "EtsParams":
        d = asdict(self)
        d.update({k: v for k, v in (("h_low", h_low), ("h_high", h_high), ("h", h)) if v is not None})
        return EtsParams(**d)


# ---------------------------------------------------------------------------
# block algebra
# ---------------------------------------------------------------------------
class _Selectors:
    """Selectors picking the seven n-blocks of the augmented vector and the
    stacked combinations that pair with the slack matrix ``S``."""

    def __init__(self, n: int):
        self.n = n
        L = [selector(i, n, 7) for i in range(8)]
        self.L = L
        v = np.vstack
        self.pi = {
            1: v([L[3], L[4], L[2] - L[3], L[5] + L[2] - L[3]]),
            2: v([-L[3], -L[4], L[4] - L[2], L[6] - L[1] - L[4]]),
            3: v([L[0], L[0], L[1] - L[3], L[5] - L[3]]),
            4: v([L[0], L[0], L[4] - L[1], L[6] - L[4]]),
            5: v([L[3], L[4], L[0], L[5]]),
            6: v([-L[3], -L[4], L[1] - L[2], -L[1]]),
            7: v([L[3], L[4], L[2] - L[1], L[2]]),
            8: v([L[3], L[4], L[0], L[6]]),
            9: v([L[1] - L[3], L[1] + L[3] - 2 * L[5]]),
            10: v([L[4] - L[1], L[4] + L[1] - 2 * L[6]]),
        }
        self.dx = L[2] - L[1]


def _functional_blocks(prob: LmiProblem, sel: _Selectors):
    """Declare the functional variables; return the h-independent block and
    the two h-slopes with their slack pairs."""
    n = sel.n
    P = prob.variable("P", "psd", n)
    R1 = prob.variable("R1", "psd", n)
    R2 = prob.variable("R2", "psd", n)
    S = prob.variable("S", "full", (4 * n, 4 * n))
    N1 = prob.variable("N1", "full", (7 * n, 2 * n))
    N2 = prob.variable("N2", "full", (7 * n, 2 * n))
    L, pi, dx = sel.L, sel.pi, sel.dx
    base = (sym(pi[1].T @ S @ pi[2] - pi[3].T @ S @ pi[4] + N1 @ pi[9] + N2 @ pi[10])
            + L[2].T @ P @ L[2] - L[1].T @ P @ L[1] + dx.T @ (R2 - R1) @ dx)
    slope1 = sym(pi[5].T @ S @ pi[6]) + dx.T @ R2 @ dx
    slope2 = sym(pi[7].T @ S @ pi[8]) + dx.T @ R1 @ dx
    return base, ((slope1, N1, R1), (slope2, N2, R2))


def _trigger_term(Om: Affine, sel: _Selectors, s1: float, s2: float) -> Affine:
    L = sel.L
    E = L[3] - L[7]
    return s1 * (L[3].T @ Om @ L[3]) + s2 * (L[7].T @ Om @ L[7]) - E.T @ Om @ E


def _add_vertices(prob, core, slopes, hs, n, head=None):
    """Add the two slope constraints at every h; ``head`` = (T1, coupling)
    prepends a data block as in the robust design."""
    for h in hs:
        if h < 1:
            raise ValueError("sampling bound h must be >= 1")
        for k, (slope, N, R) in enumerate(slopes, start=1):
            Rb = bmat([[R, np.zeros((n, n))], [np.zeros((n, n)), 3.0 * R]])
            mid = core + float(h) * slope
            if head is None:
                M = bmat([[mid, float(h) * N], [float(h) * N.T, -float(h) * Rb]])
            else:
                T1, cpl = head
                k0 = T1.shape[0]
                M = bmat([[T1, cpl, np.zeros((k0, 2 * n))],
                          [cpl.T, mid, float(h) * N],
                          [np.zeros((2 * n, k0)), float(h) * N.T, -float(h) * Rb]])
            prob.add(f"h={h},slope{k}", M, "<<")


def _as_hs(h) -> tuple:
    hs = (h,) if np.isscalar(h) else tuple(h)
    hs = tuple(int(v) for v in hs)
    if any(v < 1 for v in hs):
        raise ValueError("sampling bound h must be >= 1")
    return hs


def build_theorem1(model: LtiModel, K, params: EtsParams, h) -> LmiProblem:
    """Stability certificate for a given gain and known model."""
    hs = _as_hs(h)
    n, m = model.n, model.m
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (m, n):
        raise DimensionMismatch(f"gain shape {K.shape}, expected {(m, n)}")
    sel = _Selectors(n)
    prob = LmiProblem(label=f"model-analysis h={hs}")
    base, slopes = _functional_blocks(prob, sel)
    Om = prob.variable("Omega", "psd", n)
    F = prob.variable("F", "full", (7 * n, n))
    L = sel.L
    desc = sym(F @ (model.A @ L[1] + model.B @ K @ L[7] - L[2]))
    core = base + desc + _trigger_term(Om, sel, params.s1, params.s2)
    _add_vertices(prob, core, slopes, hs, n)
    return prob


def _design_vars(prob, sel, m, K):
    n = sel.n
    G = prob.variable("G", "full", (n, n))
    Kc = prob.variable("K_c", "full", (m, n))
    if K is not None:
        K = np.atleast_2d(np.asarray(K, dtype=float))
        if K.shape != (m, n):
            raise DimensionMismatch(f"gain shape {K.shape}, expected {(m, n)}")
        prob.add_equality("K_c=K G", Kc - K @ G)
    Omz = prob.variable("Omega_z", "psd", n)
    return G, Kc, Omz


def build_theorem2(rep: DataRep, params: EtsParams, h, K=None, form: str = "centered") -> LmiProblem:
    """Robust joint design over the data-consistent set.

    ``form="literal"`` keeps the data block as ``eps * Q_c`` with coupling
    ``eps * S_c D^T + F``.  ``form="centered"`` (default) applies the exact
    congruence that moves the data block onto the ellipsoid center and
    whitens it; it has the same feasible set but far better conditioning
    because ``Q_c`` scales with the number of samples.  ``K`` fixes the gain
    through the linear constraint ``K_c = K G``.
    """
    hs = _as_hs(h)
    n = rep.n
    m = rep.p - n
    if m < 1:
        raise DimensionMismatch("data representation has no input block")
    sel = _Selectors(n)
    L = sel.L
    prob = LmiProblem(label=f"data-driven design h={hs} form={form}")
    base, slopes = _functional_blocks(prob, sel)
    G, Kc, Omz = _design_vars(prob, sel, m, K)
    eps = prob.variable("eps", "scalar", lower=0.0)
    D = (L[1] + params.eps_d * L[2]).T
    Fm = bmat([[G @ L[1]], [Kc @ L[7]]])                     # (n+m) x 7n
    common = base + sym(-(D @ G @ L[2])) + _trigger_term(Omz, sel, params.s1, params.s2)
    if form == "literal":
        T1 = eps.scale(rep.Q_c)
        cpl = eps.scale(rep.S_c @ D.T) + Fm
        core = common + eps.scale(D @ rep.R_c @ D.T)
    elif form == "centered":
        Q = rep.Q_c
        w, V = np.linalg.eigh(symmetrize(Q))
        if w[-1] >= 0:
            raise ValueError("centered form needs Q_c negative definite")
        Qi = np.linalg.inv(Q)
        Zc = -rep.S_c.T @ Qi
        Rh = symmetrize(rep.R_c - rep.S_c.T @ Qi @ rep.S_c)
        W = V @ np.diag(1.0 / np.sqrt(-w)) @ V.T               # (-Q_c)^{-1/2}
        T1 = eps.scale(-np.eye(rep.p))
        cpl = W @ Fm
        core = common + eps.scale(D @ Rh @ D.T) + sym(D @ Zc @ Fm)
    else:
        raise ValueError(f"unknown form {form!r}")
    _add_vertices(prob, core, slopes, hs, n, head=(T1, cpl))
    return prob


def build_model_codesign(model: LtiModel, params: EtsParams, h, K=None) -> LmiProblem:
    """Joint design of gain and trigger matrix for a known model."""
    hs = _as_hs(h)
    n, m = model.n, model.m
    sel = _Selectors(n)
    L = sel.L
    prob = LmiProblem(label=f"model design h={hs}")
    base, slopes = _functional_blocks(prob, sel)
    G, Kc, Omz = _design_vars(prob, sel, m, K)
    D = (L[1] + params.eps_d * L[2]).T
    core = (base + sym(D @ (model.A @ G @ L[1] + model.B @ Kc @ L[7] - G @ L[2]))
            + _trigger_term(Omz, sel, params.s1, params.s2))
    _add_vertices(prob, core, slopes, hs, n)
    return prob


# ---------------------------------------------------------------------------
# scans and extraction
# ---------------------------------------------------------------------------
@dataclass
class ScanRow:
    h: int
    status: str
    margin: float
    iterations: int


@dataclass
class MaxHResult:
    h_max: int | None
    table: list
    witness: dict | None = None
    margin: float = float("nan")

    def to_dict(self):
        return {"h_max": self.h_max, "margin": self.margin,
                "table": [asdict(r) for r in self.table]}


def max_h_search(build: Callable[[Sequence[int]], LmiProblem], h_low: int = 1, h_cap: int = 400,
                 delta: float | None = None, budget: int = 100, stop_after: int | None = None,
                 raise_if_none: bool = True) -> MaxHResult:
    """Ascending scan of ``h_high`` over ``[h_low, h_cap]``.

    Each candidate is certified at the vertex pair ``{h_low, h_high}``;
    ``Unknown`` and solver breakdowns count as failures.  ``stop_after``
    optionally ends the scan after that many consecutive failures following
    a success; ``None`` scans the whole range.
    """
    if h_low < 1 or h_cap < h_low:
        raise ValueError("need 1 <= h_low <= h_cap")
    table, best, witness, bmargin = [], None, None, float("nan")
    fails = 0
    for hh in range(h_low, h_cap + 1):
        hs = (h_low,) if hh == h_low else (h_low, hh)
        try:
            res = solve_feasibility(build(hs), delta=delta, budget=budget)
            row = ScanRow(hh, res.status, float(res.margin), res.iterations)
        except NumericalBreakdown:
            res = None
            row = ScanRow(hh, "Breakdown", float("nan"), budget)
        table.append(row)
        if res is not None and res.status == STRICT:
            best, witness, bmargin = hh, res.witness, res.margin
            fails = 0
        else:
            fails += 1
            if stop_after is not None and best is not None and fails >= stop_after:
                break
    if best is None and raise_if_none:
        raise NoFeasibleH(f"no feasible h_high in [{h_low}, {h_cap}]")
    return MaxHResult(best, table, witness, bmargin)


@dataclass
class EtsDesign:
    K: np.ndarray
    Omega: np.ndarray
    witness: dict
    provenance: str
    margin: float = float("nan")
    params: EtsParams | None = None
    info: dict = field(default_factory=dict)

    def coordinate_change(self) -> np.ndarray:
        """``G^{-1}`` mapping plant states to the design coordinates (identity
        for analysis certificates)."""
        G = self.witness.get("G")
        return np.eye(self.K.shape[1]) if G is None else np.linalg.inv(G)

    def functional_matrices(self):
        """``P, R1, R2, S`` acting on plant states."""
        Gi = self.coordinate_change()
        n = Gi.shape[0]
        T4 = np.kron(np.eye(4), Gi)
        w = self.witness
        return (Gi.T @ w["P"] @ Gi, Gi.T @ w["R1"] @ Gi, Gi.T @ w["R2"] @ Gi,
                T4.T @ w["S"] @ T4) if n else None

    def to_dict(self):
        def enc(v):
            return v.tolist() if isinstance(v, np.ndarray) else v
        return {"provenance": self.provenance, "K": self.K.tolist(),
                "Omega": self.Omega.tolist(), "margin": self.margin,
                "params": asdict(self.params) if self.params else None,
                "witness": {k: enc(v) for k, v in self.witness.items()},
                "info": self.info}

    @classmethod
    def from_dict(cls, d) -> "EtsDesign":
        wit = {k: (np.array(v) if isinstance(v, list) else v) for k, v in d["witness"].items()}
        params = EtsParams(**d["params"]) if d.get("params") else None
        return cls(np.array(d["K"]), np.array(d["Omega"]), wit, d["provenance"],
                   d.get("margin", float("nan")), params, d.get("info", {}))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def extract_design(witness: dict, provenance: str, K=None, margin: float = float("nan"),
                   params: EtsParams | None = None) -> EtsDesign:
    """Recover gain and trigger matrix from a witness.

    Analysis witnesses carry ``Omega`` directly and need the analysed ``K``;
    design witnesses give ``K = K_c G^{-1}`` and ``Omega = G^{-T} Omega_z G^{-1}``.
    """
    if "G" in witness:
        G = np.atleast_2d(witness["G"])
        if np.linalg.cond(G) > 1e10:
            raise SingularG(f"cond(G) = {np.linalg.cond(G):.3e}")
        Gi = np.linalg.inv(G)
        Kout = np.atleast_2d(witness["K_c"]) @ Gi
        Om = symmetrize(Gi.T @ witness["Omega_z"] @ Gi)
    else:
        if K is None:
            raise ValueError("analysis witness needs the analysed gain")
        Kout = np.atleast_2d(np.asarray(K, dtype=float))
        Om = symmetrize(np.atleast_2d(witness["Omega"]))
    if np.linalg.eigvalsh(Om)[0] <= 0:
        raise ValueError("recovered trigger matrix is not positive definite")
    return EtsDesign(Kout, Om, dict(witness), provenance, margin, params)


def design(build: Callable[[Sequence[int]], LmiProblem], params: EtsParams, provenance: str,
           K=None, budget: int = 150) -> EtsDesign:
    """Solve at the vertices ``{h_low, h_high}`` for a max-margin witness and
    extract the design; raises :class:`NoFeasibleH` when not certified."""
    hs = sorted({params.h_low, params.h_high})
    res = solve_feasibility(build(hs), budget=budget, target="center")
    if res.status != STRICT:
        raise NoFeasibleH(f"design LMIs not certified at h in {hs}: {res.status}")
    d = extract_design(res.witness, provenance, K=K, margin=res.margin, params=params)
    d.info.update({"iterations": res.iterations, "delta": res.delta})
    return d


__all__ = ["EtsParams", "EtsDesign", "MaxHResult", "ScanRow", "NoFeasibleH", "SingularG",
           "build_theorem1", "build_theorem2", "build_model_codesign", "max_h_search",
           "extract_design", "design", "INFEASIBLE", "STRICT", "UNKNOWN"]
