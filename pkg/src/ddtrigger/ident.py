"""Least-squares identification baseline."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr, solve_triangular

from .sysdata import DataRep, ExperimentData, LtiModel


class RankDeficient(ValueError):
    pass


@dataclass(frozen=True)
class IdentResult:
    A_hat: np.ndarray
    B_hat: np.ndarray
    residual: float
    cond: float

    def model(self) -> LtiModel:
        return LtiModel(self.A_hat, self.B_hat)

    def stacked(self) -> np.ndarray:
        return np.hstack([self.A_hat, self.B_hat])

    def to_dict(self):
        return {"A": self.A_hat.tolist(), "B": self.B_hat.tolist(),
                "residual": self.residual, "cond": self.cond}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "IdentResult":
        d = json.loads(text)
        return cls(np.array(d["A"], dtype=float), np.array(d["B"], dtype=float),
                   float(d["residual"]), float(d["cond"]))


def least_squares_id(data: ExperimentData, rank_tol: float = 1e-12) -> IdentResult:
    """Fit ``x(T+1) ~ A x(T) + B u(T)`` over the data window via Householder QR."""
    Phi = np.vstack([data.X, data.U]).T          # rho x (n+m)
    Y = data.X_plus.T
    rows, cols = Phi.shape
    if rows < cols:
        raise RankDeficient(f"{rows} samples for {cols} unknowns per row")
    Qm, Rm = qr(Phi, mode="economic")
    d = np.abs(np.diag(Rm))
    if d.min() <= rank_tol * max(d.max(), 1e-300):
        raise RankDeficient("regressor [X; U] does not have full row rank")
    Theta = solve_triangular(Rm, Qm.T @ Y)       # (n+m) x n, equals [A B]^T
    n = data.n
    AB = Theta.T
    res = float(np.linalg.norm(Y - Phi @ Theta))
    sv = np.linalg.svd(Phi, compute_uv=False)
    return IdentResult(AB[:, :n], AB[:, n:], res, float(sv[0] / sv[-1]))


def consistent_with_data(result: IdentResult, rep: DataRep, tol: float = 0.0) -> bool:
    """Whether the estimate lies in the data-consistent set; ``False`` means
    the residuals are larger than the assumed noise bound allows."""
    return rep.contains(result.stacked(), tol=tol)


__all__ = ["IdentResult", "RankDeficient", "least_squares_id", "consistent_with_data"]
