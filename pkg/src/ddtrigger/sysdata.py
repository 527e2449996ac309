"""Plant models, experiment data and the data-consistent set of system matrices.

For recorded data ``X, X_+, U`` and a quadratic noise bound, every pair
``[A B]`` that explains the data satisfies the quadratic matrix inequality

    [[A B]^T; I]^T  Theta  [[A B]^T; I]  >= 0,

with ``Theta`` the congruence of the noise-bound matrix by the stacked data
factor ``[[-X, 0], [-U, 0], [X_+, B_w]]``.  When the upper-left block ``Q_c``
is negative definite the set is a matrix ellipsoid around
``Z_c = -S_c^T Q_c^{-1}``.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .matrixcore import DimensionMismatch, as_matrix, symmetrize, zoh_discretize


class ParseError(ValueError):
    pass


class SchemaError(ValueError):
    pass


class GapError(ValueError):
    pass


class InsufficientTail(ValueError):
    pass


class UnboundedSet(ValueError):
    """``Q_c`` is not negative definite, so the consistent set is unbounded."""


@dataclass(frozen=True)
class LtiModel:
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        B = as_matrix(self.B, "B")
        if A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
            raise DimensionMismatch(f"A {A.shape} and B {B.shape} do not conform")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @classmethod
    def from_continuous(cls, A_c, B_c, T: float) -> "LtiModel":
        return cls(*zoh_discretize(A_c, B_c, T))

    def to_dict(self):
        return {"A": self.A.tolist(), "B": self.B.tolist()}


def double_integrator(T: float) -> LtiModel:
    """The damped double integrator used throughout the examples."""
    return LtiModel.from_continuous([[0.0, 1.0], [0.0, -0.1]], [[0.0], [0.1]], T)


@dataclass(frozen=True)
class ExperimentData:
    """Recorded trajectory.

    ``states`` holds ``x(0..L)`` and ``inputs`` holds ``u(0..L-1)``; the first
    ``rho`` columns define ``X``, ``X_+`` and ``U`` and any remaining columns
    form the tail used for lifting.
    """

    states: np.ndarray
    inputs: np.ndarray
    B_w: np.ndarray
    rho: int
    seed: int | None = None

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.states, dtype=float))
        u = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        Bw = as_matrix(self.B_w, "B_w")
        if u.shape[1] != x.shape[1] - 1:
            raise DimensionMismatch("need exactly one more state than inputs")
        if not 1 <= self.rho <= u.shape[1]:
            raise DimensionMismatch(f"rho={self.rho} outside 1..{u.shape[1]}")
        if Bw.shape[0] != x.shape[0]:
            raise DimensionMismatch("B_w rows must match the state dimension")
        sv = np.linalg.svd(Bw, compute_uv=False)
        if Bw.shape[1] > Bw.shape[0] or sv[-1] <= 1e-10 * sv[0]:
            raise DimensionMismatch("B_w must have full column rank")
        object.__setattr__(self, "states", x)
        object.__setattr__(self, "inputs", u)
        object.__setattr__(self, "B_w", Bw)

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def m(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_w(self) -> int:
        return self.B_w.shape[1]

    @property
    def X(self) -> np.ndarray:
        return self.states[:, :self.rho]

    @property
    def X_plus(self) -> np.ndarray:
        return self.states[:, 1:self.rho + 1]

    @property
    def U(self) -> np.ndarray:
        return self.inputs[:, :self.rho]

    @property
    def length(self) -> int:
        return self.inputs.shape[1]

    def truncated(self, rho: int) -> "ExperimentData":
        """Same record with a shorter data window (the rest becomes tail)."""
        return ExperimentData(self.states, self.inputs, self.B_w, rho, self.seed)

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in (self.states, self.inputs, self.B_w):
            h.update(np.ascontiguousarray(a).tobytes())
        h.update(str(self.rho).encode())
        return h.hexdigest()[:16]

    def richness(self) -> float:
        """Smallest singular value of the regressor ``[X; U]``."""
        return float(np.linalg.svd(np.vstack([self.X, self.U]), compute_uv=False)[-1])


@dataclass(frozen=True)
class GeneratedExperiment:
    """Generator output: the data plus the disturbance kept for oracle tests only."""

    data: ExperimentData
    noise: np.ndarray = field(repr=False)


def generate_experiment(model: LtiModel, B_w, rho: int, wbar: float, seed: int,
                        u_range=(-1.0, 1.0), tail: int = 0, inputs=None) -> GeneratedExperiment:
    """Simulate ``x(T+1) = A x + B u + B_w w`` from ``x(0) = 0``.

    Inputs are uniform on ``u_range`` (unless given explicitly) and the
    disturbance is uniform on the box ``[-wbar, wbar]^{n_w}``.
    """
    if rho < 1 or wbar < 0:
        raise ValueError("need rho >= 1 and wbar >= 0")
    B_w = as_matrix(B_w, "B_w")
    L = rho + tail
    rng = np.random.default_rng(seed)
    if inputs is None:
        u = rng.uniform(u_range[0], u_range[1], size=(model.m, L))
    else:
        u = np.atleast_2d(np.asarray(inputs, dtype=float)).reshape(model.m, L)
    w = rng.uniform(-wbar, wbar, size=(B_w.shape[1], L))
    x = np.zeros((model.n, L + 1))
    for t in range(L):
        x[:, t + 1] = model.A @ x[:, t] + model.B @ u[:, t] + B_w @ w[:, t]
    return GeneratedExperiment(ExperimentData(x, u, B_w, rho, seed), w)


# CSV ---------------------------------------------------------------------
def export_csv(data: ExperimentData, path) -> None:
    """Write ``t, x1..xn, u1..um``; the final row has no input."""
    n, m = data.n, data.m
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)])
        for t in range(data.states.shape[1]):
            xs = [f"{v:.17g}" for v in data.states[:, t]]
            us = ([f"{v:.17g}" for v in data.inputs[:, t]] if t < data.length
                  else [""] * m)
            wr.writerow([t] + xs + us)


def ingest_csv(path, B_w=None, rho: int | None = None) -> ExperimentData:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError("empty file")
    header = [h.strip() for h in rows[0]]
    xs = [h for h in header if h.startswith("x")]
    us = [h for h in header if h.startswith("u")]
    n, m = len(xs), len(us)
    expected = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)]
    if header != expected or n == 0 or m == 0:
        raise SchemaError(f"header {header} does not match t, x1..xn, u1..um")
    body = rows[1:]
    if len(body) < 2:
        raise SchemaError("need at least two time rows")
    states = np.zeros((n, len(body)))
    inputs = np.zeros((m, len(body) - 1))
    for r, row in enumerate(body):
        line = r + 2
        if len(row) != len(header):
            raise ParseError(f"line {line}: expected {len(header)} fields, got {len(row)}")
        try:
            t = int(row[0])
        except ValueError as exc:
            raise ParseError(f"line {line}, column 1: bad time index {row[0]!r}") from exc
        if t != r:
            raise GapError(f"line {line}: time index {t}, expected {r}")
        for j in range(n + m):
            cell = row[1 + j].strip()
            if j >= n and r == len(body) - 1:
                continue  # input on the final state row is ignored
            try:
                val = float(cell)
            except ValueError as exc:
                raise ParseError(f"line {line}, column {j + 2}: bad number {cell!r}") from exc
            if j < n:
                states[j, r] = val
            else:
                inputs[j - n, r] = val
    B_w = np.eye(n) if B_w is None else B_w
    return ExperimentData(states, inputs, B_w, inputs.shape[1] if rho is None else rho)


# noise bounds ---------------------------------------------------------------
@dataclass(frozen=True)
class NoiseBound:
    Q_d: np.ndarray
    S_d: np.ndarray
    R_d: np.ndarray

    def __post_init__(self):
        if np.linalg.eigvalsh(symmetrize(self.Q_d))[-1] >= 0:
            raise ValueError("Q_d must be negative definite")

    def admits(self, W, tol: float = 0.0) -> bool:
        """Whether ``W`` satisfies the quadratic bound."""
        W = np.atleast_2d(W)
        M = W @ self.Q_d @ W.T + W @ self.S_d + self.S_d.T @ W.T + self.R_d
        return bool(np.linalg.eigvalsh(symmetrize(M))[0] >= -tol)

    def to_dict(self):
        rho = self.Q_d.shape[0]
        diag = np.allclose(self.Q_d, -np.eye(rho)) and not np.any(self.S_d)
        if diag:
            return {"kind": "box", "rho": rho, "R_d": self.R_d.tolist()}
        return {"Q_d": self.Q_d.tolist(), "S_d": self.S_d.tolist(), "R_d": self.R_d.tolist()}


def box_noise_bound(wbar: float, rho: int, n_w: int) -> NoiseBound:
    """``Q_d = -I``, ``S_d = 0``, ``R_d = wbar^2 rho I``."""
    if wbar < 0 or rho < 1:
        raise ValueError("need wbar >= 0 and rho >= 1")
    return NoiseBound(-np.eye(rho), np.zeros((rho, n_w)), wbar ** 2 * rho * np.eye(n_w))


@dataclass(frozen=True)
class DataRep:
    """``Theta`` with its partition; ``p`` is the width of the regressor block."""

    theta: np.ndarray
    p: int

    @property
    def Q_c(self):
        return self.theta[:self.p, :self.p]

    @property
    def S_c(self):
        return self.theta[:self.p, self.p:]

    @property
    def R_c(self):
        return self.theta[self.p:, self.p:]

    @property
    def n(self):
        return self.theta.shape[0] - self.p

    def qmi(self, Z) -> np.ndarray:
        """Quadratic form ``[Z^T; I]^T Theta [Z^T; I]`` at ``Z = [A B]``."""
        Z = np.atleast_2d(Z)
        M = np.vstack([Z.T, np.eye(self.n)])
        return symmetrize(M.T @ self.theta @ M)

    def contains(self, Z, tol: float = 0.0) -> bool:
        M = self.qmi(Z)
        w = np.linalg.eigvalsh(M)
        return bool(w[0] >= -tol * (1.0 + abs(w[-1])))


def _theta(X, U, Xp, Bw, bound: NoiseBound) -> np.ndarray:
    n = X.shape[0]
    nu = U.shape[0]
    nw = Bw.shape[1]
    rho = X.shape[1]
    if bound.Q_d.shape != (rho, rho) or bound.R_d.shape != (nw, nw):
        raise DimensionMismatch("noise bound does not match the data window")
    Lf = np.block([[-X, np.zeros((n, nw))],
                   [-U, np.zeros((nu, nw))],
                   [Xp, Bw]])
    Md = np.block([[bound.Q_d, bound.S_d], [bound.S_d.T, bound.R_d]])
    return symmetrize(Lf @ Md @ Lf.T)


def assemble_theta(data: ExperimentData, bound: NoiseBound) -> DataRep:
    return DataRep(_theta(data.X, data.U, data.X_plus, data.B_w, bound), data.n + data.m)


@dataclass(frozen=True)
class EllipsoidBounds:
    center: np.ndarray
    radius: float
    norm_A: float


def consistent_set_bounds(rep: DataRep) -> EllipsoidBounds:
    """Center and spectral-norm radius of the matrix ellipsoid."""
    Q = rep.Q_c
    w = np.linalg.eigvalsh(Q)
    if w[-1] >= 0:
        raise UnboundedSet("Q_c is not negative definite; data are not rich enough")
    Qi = np.linalg.inv(Q)
    Zc = -rep.S_c.T @ Qi
    Rh = symmetrize(rep.R_c - rep.S_c.T @ Qi @ rep.S_c)
    lam = max(float(np.linalg.eigvalsh(Rh)[-1]), 0.0)
    radius = float(np.sqrt(lam / -w[-1]))
    n = rep.n
    norm_A = float(np.linalg.norm(Zc[:, :n], 2) + radius)
    return EllipsoidBounds(Zc, radius, norm_A)


# lifting -------------------------------------------------------------------
@dataclass(frozen=True)
class LiftedDataRep:
    s: int
    X_plus: np.ndarray
    U: np.ndarray
    B_w: np.ndarray
    bound: NoiseBound
    rep: DataRep


def lifted_noise_bound(wbar_point: float, data: ExperimentData, bound: NoiseBound,
                       s: int, norm_A: float | None = None) -> NoiseBound:
    """Noise bound for the horizon-``s`` lifted disturbance.

    ``wbar_point`` bounds ``|w(T)|_2`` pointwise.  For ``s > 1`` every column
    of ``W^s = [A^{s-1} B_w ... B_w] W_s`` has norm at most
    ``sum_i a^i |B_w| wbar_point`` where ``a`` bounds ``|A|_2`` over the
    consistent set, so ``W^s W^s^T <= rho (.)^2 I``.
    """
    if s < 1:
        raise ValueError("s must be >= 1")
    if s == 1:
        return bound
    if norm_A is None:
        norm_A = consistent_set_bounds(assemble_theta(data, bound)).norm_A
    bw = np.linalg.norm(data.B_w, 2)
    c = sum(norm_A ** i for i in range(s)) * bw * wbar_point
    rho = data.rho
    return NoiseBound(-np.eye(rho), np.zeros((rho, data.n)), rho * c ** 2 * np.eye(data.n))


def lift_data(data: ExperimentData, s: int, bound: NoiseBound) -> LiftedDataRep:
    if s < 1:
        raise ValueError("s must be >= 1")
    rho = data.rho
    if data.states.shape[1] < rho + s or data.inputs.shape[1] < rho + s - 1:
        raise InsufficientTail(f"horizon {s} needs states up to index {rho + s - 1}")
    Xp = data.states[:, s:rho + s]
    Us = np.vstack([data.inputs[:, i:rho + i] for i in range(s)])
    Bws = data.B_w if s == 1 else np.eye(data.n)
    theta = _theta(data.X, Us, Xp, Bws, bound)
    return LiftedDataRep(s, Xp, Us, Bws, bound, DataRep(theta, data.n + s * data.m))


def lifted_matrices(model: LtiModel, s: int):
    """``A^s`` and ``[A^{s-1} B, ..., B]`` of the horizon-``s`` lifted plant."""
    As = np.linalg.matrix_power(model.A, s)
    Bs = np.hstack([np.linalg.matrix_power(model.A, s - 1 - i) @ model.B for i in range(s)])
    return As, Bs


def data_descriptor(data: ExperimentData, bound: NoiseBound, wbar: float | None = None) -> str:
    return json.dumps({"B_w": data.B_w.tolist(), "rho": data.rho, "wbar": wbar,
                       "noise_bound": bound.to_dict(), "seed": data.seed,
                       "digest": data.digest()})
