"""Dense primal-dual interior-point decision procedure for strict LMIs.

The problem ``F_b(v) > 0`` for all blocks ``b`` (after sense normalization) is
homogenized with a scalar ``tau > 0`` when it has constant terms, reduced to
the range of the constraint operator, and normalized by fixing the total
trace of all blocks to their total dimension ``N``.  On that slice we solve

    maximize t   subject to   F(q) - t I >= 0,

as the dual standard form ``max b'y  s.t.  C - sum_i y_i A_i >= 0``, using an
HKM-direction Mehrotra predictor-corrector that starts primal and dual
feasible (``X = I/N`` is primal feasible by construction).

Decisions never rest on solver state alone:

* feasibility is declared only after mapping the current iterate back to the
  original variables and re-evaluating every constraint exactly;
* infeasibility is declared only when the current primal matrix ``X >= 0``
  pairs with the constraint operator to a trace-normalized certificate that
  rules out every point with ``F(q) >= 0`` (see ``_certificate``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .problem import LmiProblem

STRICT = "StrictlyFeasible"
INFEASIBLE = "Infeasible"
UNKNOWN = "Unknown"

_SQRT2 = np.sqrt(2.0)


class NumericalBreakdown(RuntimeError):
    def __init__(self, msg, iterate=None):
        super().__init__(msg)
        self.iterate = iterate


@dataclass
class Feasibility:
    status: str
    witness: dict | None
    margin: float
    delta: float
    iterations: int = 0
    residuals: dict = field(default_factory=dict)
    certificate: dict | None = None

    @property
    def feasible(self) -> bool:
        return self.status == STRICT


def default_delta(problem: LmiProblem) -> float:
    """``1e-7 * (1 + largest spectral norm of a constant term)``."""
    norms = [np.linalg.norm(c.expr.const, 2) for c in problem.all_constraints()]
    return 1e-7 * (1.0 + max(norms, default=0.0))


# svec helpers ---------------------------------------------------------------
def _svec_layout(k):
    iu = np.triu_indices(k)
    w = np.where(iu[0] == iu[1], 1.0, _SQRT2)
    return iu, w


def _svec_tensor(T, k):
    """``(k, k, p)`` -> ``(k(k+1)/2, p)`` isometric symmetric vectorization."""
    iu, w = _svec_layout(k)
    return T[iu[0], iu[1], :] * w[:, None]


def _unsvec_tensor(V, k):
    """``(k(k+1)/2, p)`` -> ``(p, k, k)``."""
    iu, w = _svec_layout(k)
    p = V.shape[1]
    out = np.zeros((p, k, k))
    vals = (V / w[:, None]).T
    out[:, iu[0], iu[1]] = vals
    out[:, iu[1], iu[0]] = vals
    return out


@dataclass
class _Compiled:
    names: list
    consts: list          # original normalized constants, (k, k)
    lins: list            # original coefficient tensors, (k, k, nv)
    v_e: np.ndarray
    E: np.ndarray
    homogeneous: bool
    dims: list            # SDP block sizes (includes the tau block)
    Ur: np.ndarray
    s: np.ndarray
    Vr: np.ndarray
    a_hat: np.ndarray
    ne: int


def _compile(problem: LmiProblem):
    offs = problem.offsets()
    nv = problem.num_params
    names, consts, lins = [], [], []
    for c in problem.all_constraints():
        e = c.normalized()
        k = c.dim
        A = np.zeros((k, k, nv))
        for name, T in e.terms.items():
            a, b = offs[name]
            A[:, :, a:b] += T
        names.append(c.name)
        consts.append(e.const.copy())
        lins.append(A)

    # linear equalities: v = v_e + E w
    if problem.equalities:
        rows, rhs = [], []
        for _, e in problem.equalities:
            r = e.const.size
            A = np.zeros((r, nv))
            for name, T in e.terms.items():
                a, b = offs[name]
                A[:, a:b] += T.reshape(r, -1)
            rows.append(A)
            rhs.append(-e.const.ravel())
        Aeq = np.vstack(rows)
        beq = np.concatenate(rhs)
        v_e = np.linalg.lstsq(Aeq, beq, rcond=None)[0]
        if np.linalg.norm(Aeq @ v_e - beq) > 1e-9 * (1.0 + np.linalg.norm(beq)):
            return None
        E = sla.null_space(Aeq, rcond=1e-12)
    else:
        v_e = np.zeros(nv)
        E = np.eye(nv)
    ne = E.shape[1]

    blocks = []
    homogeneous = not np.any(v_e) and all(not np.any(C) for C in consts)
    for C, A in zip(consts, lins):
        Cf = C + A @ v_e
        Af = A @ E
        if not homogeneous:
            Af = np.concatenate([Af, Cf[:, :, None]], axis=2)
        blocks.append(Af)
    nx = ne if homogeneous else ne + 1
    if not homogeneous:
        tau_blk = np.zeros((1, 1, nx))
        tau_blk[0, 0, -1] = 1.0
        blocks.append(tau_blk)
    dims = [B.shape[0] for B in blocks]
    op = np.vstack([_svec_tensor(B, k) for B, k in zip(blocks, dims)])
    eye_vec = np.concatenate([_svec_tensor(np.eye(k)[:, :, None], k)[:, 0] for k in dims])
    if op.shape[1] == 0:
        U = np.zeros((op.shape[0], 0))
        s = np.zeros(0)
        Vt = np.zeros((0, 0))
    else:
        U, s, Vt = np.linalg.svd(op, full_matrices=False)
    r = int(np.sum(s > 1e-10 * s[0])) if s.size and s[0] > 0 else 0
    Ur = U[:, :r]
    a_hat = Ur.T @ eye_vec
    return _Compiled(names, consts, lins, v_e, E, homogeneous, dims, Ur, s[:r],
                     Vt[:r].T, a_hat, ne)


def _map_back(cp: _Compiled, q):
    """Normalized coordinates ``q`` -> original flat parameter vector (or None)."""
    x = cp.Vr @ (q / cp.s)
    if cp.homogeneous:
        return cp.E @ x
    tau = x[-1]
    if tau <= 0:
        return None
    return cp.v_e + cp.E @ (x[:-1] / tau)


def _margin_original(cp: _Compiled, v):
    lam = [np.linalg.eigvalsh(0.5 * (C + A @ v + (C + A @ v).T))[0]
           for C, A in zip(cp.consts, cp.lins)]
    return float(min(lam)) if lam else np.inf


def _certificate(cp, Xs, N, floor=0.0):
    """Check whether the primal iterate excludes every ``F(q) >= floor I``.

    With ``g = F^*(X)`` split as ``g = mu * a_hat + r`` (``r`` orthogonal to
    ``a_hat``), every ``q`` on the normalization slice with ``F(q) >= floor I``
    satisfies ``floor tr X <= <F(q), X> = mu N + r'q`` while
    ``|q| = |F(q)|_F <= tr F(q) = N``.  Hence ``N (mu + |r|) < floor tr X``
    rules all such ``q`` out.
    """
    xv = np.concatenate([_svec_tensor(X[:, :, None], X.shape[0])[:, 0] for X in Xs])
    g = cp.Ur.T @ xv
    aa = float(cp.a_hat @ cp.a_hat)
    mu = float(g @ cp.a_hat) / aa
    r = g - mu * cp.a_hat
    rn = float(np.linalg.norm(r))
    trX = float(sum(np.trace(X) for X in Xs))
    ok = N * (mu + rn) < floor * trX and all(np.linalg.eigvalsh(X)[0] >= 0 for X in Xs)
    return ok, {"mu": mu, "residual": rn, "normalization": N, "trace_X": trX,
                "floor": floor}


def _max_step(X, dX):
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    Li = sla.solve_triangular(L, np.eye(X.shape[0]), lower=True)
    lam = np.linalg.eigvalsh(Li @ dX @ Li.T)[0]
    return np.inf if lam >= 0 else -1.0 / lam


def solve_feasibility(problem: LmiProblem, delta: float | None = None, budget: int = 100,
                      target: str = "feasible", verbose: bool = False) -> Feasibility:
    """Decide strict feasibility of ``problem``.

    ``target="feasible"`` stops at the first iterate whose exact margin reaches
    ``delta``; ``target="center"`` keeps going to the max-margin point and
    returns it, which gives better-conditioned witnesses for design.
    """
    problem.validate()
    if not problem.all_constraints():
        raise ValueError("problem has no constraints")
    delta = default_delta(problem) if delta is None else float(delta)
    cp = _compile(problem)
    if cp is None:
        return Feasibility(INFEASIBLE, None, -np.inf, delta,
                           certificate={"reason": "inconsistent linear equalities"})
    N = float(sum(cp.dims))
    aa = float(cp.a_hat @ cp.a_hat) if cp.a_hat.size else 0.0
    if cp.Ur.shape[1] == 0 or aa <= 1e-24 * N:
        # every constraint value is traceless (or identically zero): the
        # identity multiplier pairs to zero with all of them
        return Feasibility(INFEASIBLE, None, -np.inf, delta,
                           certificate={"reason": "all constraint values are traceless"})

    # SDP data on the normalization slice q = q0 + Z z
    q0 = N * cp.a_hat / aa
    Z = sla.null_space(cp.a_hat[None, :])
    rows = np.cumsum([0] + [k * (k + 1) // 2 for k in cp.dims])
    Cb, Ab = [], []
    for i, k in enumerate(cp.dims):
        Mb = _unsvec_tensor(cp.Ur[rows[i]:rows[i + 1], :], k)       # (r, k, k)
        Cb.append(np.einsum("p,pij->ij", q0, Mb))
        Az = -np.einsum("pq,pij->qij", Z, Mb)
        Ab.append(np.concatenate([Az, np.eye(k)[None]], axis=0))     # (m, k, k)
    m = Z.shape[1] + 1
    Aflat = [A.reshape(m, -1) for A in Ab]
    b = np.zeros(m)
    b[-1] = 1.0

    def dual_slack(y):
        return [C - np.einsum("i,ijk->jk", y, A) for C, A in zip(Cb, Ab)]

    def opA(Ys):
        return sum(Af @ Y.ravel() for Af, Y in zip(Aflat, Ys))

    # homogeneous problems are scale free, so emptiness of the margin-delta
    # slice is the meaningful claim; otherwise certify plain emptiness
    floor = delta if cp.homogeneous else 0.0
    y = np.zeros(m)
    y[-1] = min(np.linalg.eigvalsh(C)[0] for C in Cb) - 1.0
    S = dual_slack(y)
    X = [np.eye(k) / N for k in cp.dims]
    best = (-np.inf, None)
    resid = {}
    t_hist = []
    it = 0
    for it in range(1, budget + 1):
        # exact check of the current dual point
        q = q0 + Z @ y[:-1]
        Fq = [C - np.einsum("i,ijk->jk", y[:-1], A[:-1]) for C, A in zip(Cb, Ab)]
        mn = min(np.linalg.eigvalsh(0.5 * (F + F.T))[0] for F in Fq)
        if mn > 0:
            v = _map_back(cp, q)
            if v is not None:
                marg = _margin_original(cp, v)
                if marg > best[0]:
                    best = (marg, v)
                if target == "feasible" and marg >= delta:
                    break
        ok, cert = _certificate(cp, X, N, floor)
        if ok:
            return Feasibility(INFEASIBLE, None, best[0], delta, it,
                               {"mu": _mu(X, S, N), "t": float(y[-1])}, cert)

        mu = _mu(X, S, N)
        rp = float(np.linalg.norm(b - opA(X)))
        resid = {"mu": mu, "primal": rp, "t": float(y[-1])}
        if verbose:
            print(f"it {it:3d} t={y[-1]: .3e} mu={mu:.2e} rp={rp:.1e} margin={best[0]:.3e}")
        if mu < 1e-13 and rp < 1e-10:
            break
        t_hist.append(float(y[-1]))
        if mu < 1e-11 and len(t_hist) > 3 and abs(t_hist[-1] - t_hist[-4]) <= 1e-12 * (1 + abs(t_hist[-1])):
            break  # stalled at the optimum without a usable certificate
        try:
            Sinv = [_spd_inv(Si) for Si in S]
        except np.linalg.LinAlgError as exc:
            raise NumericalBreakdown("dual slack lost definiteness", {"y": y}) from exc
        XAS = [X[i] @ Ab[i] @ Sinv[i] for i in range(len(Ab))]
        M = sum(Af @ T.reshape(m, -1).T for Af, T in zip(Aflat, XAS))
        M = 0.5 * (M + M.T)
        try:
            fac = sla.cho_factor(M)
            solve = lambda r: sla.cho_solve(fac, r)        # noqa: E731
        except np.linalg.LinAlgError:
            solve = lambda r: np.linalg.lstsq(M, r, rcond=None)[0]  # noqa: E731

        def direction(rhs, extra):
            dy = solve(rhs)
            dS = [-np.einsum("i,ijk->jk", dy, A) for A in Ab]
            dX = []
            for i in range(len(Ab)):
                D = extra[i] - X[i] - X[i] @ dS[i] @ Sinv[i]
                dX.append(0.5 * (D + D.T))
            return dy, dS, dX

        # predictor
        dy, dS, dX = direction(b, [np.zeros_like(Xi) for Xi in X])
        ap = min(1.0, min(_max_step(X[i], dX[i]) for i in range(len(X))))
        ad = min(1.0, min(_max_step(S[i], dS[i]) for i in range(len(S))))
        mu_aff = sum(np.sum((X[i] + ap * dX[i]) * (S[i] + ad * dS[i])) for i in range(len(X))) / N
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3
        # corrector
        corr = [dX[i] @ dS[i] @ Sinv[i] for i in range(len(X))]
        rhs = b - sigma * mu * opA(Sinv) + opA(corr)
        extra = [sigma * mu * Sinv[i] - corr[i] for i in range(len(X))]
        dy, dS, dX = direction(rhs, extra)
        ap = min(1.0, 0.98 * min(_max_step(X[i], dX[i]) for i in range(len(X))))
        ad = min(1.0, 0.98 * min(_max_step(S[i], dS[i]) for i in range(len(S))))
        X = [X[i] + ap * dX[i] for i in range(len(X))]
        for _ in range(30):
            y_new = y + ad * dy
            S_new = dual_slack(y_new)
            if all(_is_pd(Si) for Si in S_new):
                break
            ad *= 0.5
        else:
            raise NumericalBreakdown("could not keep the dual slack definite", {"y": y})
        y, S = y_new, S_new
        if not np.all(np.isfinite(y)):
            raise NumericalBreakdown("non-finite iterate", {"y": y})

    marg, v = best
    resid.setdefault("t", float(y[-1]))
    if v is not None and marg >= delta:
        assignment = problem.assignment_from_vector(v)
        return Feasibility(STRICT, assignment, marg, delta, it, resid)
    ok, cert = _certificate(cp, X, N, floor)
    if ok:
        return Feasibility(INFEASIBLE, None, marg, delta, it, resid, cert)
    witness = problem.assignment_from_vector(v) if v is not None else None
    return Feasibility(UNKNOWN, witness, marg, delta, it, resid)


def _mu(X, S, N):
    return float(sum(np.sum(Xi * Si) for Xi, Si in zip(X, S)) / N)


def _is_pd(S):
    try:
        np.linalg.cholesky(S)
        return True
    except np.linalg.LinAlgError:
        return False


def _spd_inv(S):
    c = sla.cho_factor(S)
    return sla.cho_solve(c, np.eye(S.shape[0]))
