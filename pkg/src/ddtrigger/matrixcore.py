"""Dense matrix helpers shared by every other module.

All routines take and return plain ``numpy`` arrays.  The eigensolver and the
matrix exponential delegate to LAPACK (``numpy.linalg.eigh``) and to
``scipy.linalg.expm`` (scaling and squaring with a degree-13 Pade approximant).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla


class DimensionMismatch(ValueError):
    """A block or operand does not have the expected shape."""


class ConvergenceFailure(RuntimeError):
    """An iterative decomposition did not reach its accuracy contract."""


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Return ``M`` as a finite 2-D float array."""
    A = np.atleast_2d(np.asarray(M, dtype=float))
    if A.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return A


def symmetrize(M) -> np.ndarray:
    A = np.asarray(M, dtype=float)
    return 0.5 * (A + A.T)


def is_symmetric(M, rtol: float = 1e-12) -> bool:
    A = np.asarray(M, dtype=float)
    scale = 1.0 + (np.max(np.abs(A)) if A.size else 0.0)
    return A.shape[0] == A.shape[1] and np.max(np.abs(A - A.T), initial=0.0) <= rtol * scale


@dataclass(frozen=True)
class Selector:
    """Row selector picking block ``index`` out of ``num_blocks`` stacked blocks.

    ``index == 0`` is the all-zero selector.
    """

    index: int
    size: int
    num_blocks: int = 7

    def __post_init__(self):
        if not 0 <= self.index <= self.num_blocks:
            raise DimensionMismatch(
                f"selector index {self.index} outside 0..{self.num_blocks}")

    @property
    def matrix(self) -> np.ndarray:
        n = self.size
        M = np.zeros((n, self.num_blocks * n))
        if self.index > 0:
            M[:, (self.index - 1) * n:self.index * n] = np.eye(n)
        return M


def selector(index: int, size: int, num_blocks: int = 7) -> np.ndarray:
    return Selector(index, size, num_blocks).matrix


def block_assemble(layout, row_dims, col_dims) -> np.ndarray:
    """Concatenate a grid of blocks; ``None`` cells are zero.

    ``row_dims``/``col_dims`` fix every cell's shape so that empty rows or
    columns are still well defined.
    """
    row_dims = [int(r) for r in row_dims]
    col_dims = [int(c) for c in col_dims]
    if len(layout) != len(row_dims):
        raise DimensionMismatch("layout has %d block rows, expected %d"
                                % (len(layout), len(row_dims)))
    out = np.zeros((sum(row_dims), sum(col_dims)))
    r0 = 0
    for i, row in enumerate(layout):
        if len(row) != len(col_dims):
            raise DimensionMismatch(f"block row {i} has {len(row)} cells, "
                                    f"expected {len(col_dims)}")
        c0 = 0
        for j, blk in enumerate(row):
            if blk is not None:
                B = np.atleast_2d(np.asarray(blk, dtype=float))
                if B.shape != (row_dims[i], col_dims[j]):
                    raise DimensionMismatch(
                        f"block ({i},{j}) has shape {B.shape}, "
                        f"expected {(row_dims[i], col_dims[j])}")
                out[r0:r0 + row_dims[i], c0:c0 + col_dims[j]] = B
            c0 += col_dims[j]
        r0 += row_dims[i]
    return out


def sym_eig(M):
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix."""
    A = as_matrix(M)
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"sym_eig needs a square matrix, got {A.shape}")
    A = symmetrize(A)
    try:
        w, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    if A.size:
        resid = np.linalg.norm(V @ np.diag(w) @ V.T - A, 2)
        bound = 1e-9 * (1.0 + np.max(np.abs(w)))
        if resid > bound:
            raise ConvergenceFailure(f"eigen reconstruction residual {resid:.3e}")
    return w, V


def lambda_min(M) -> float:
    A = symmetrize(np.atleast_2d(np.asarray(M, dtype=float)))
    return float(np.linalg.eigvalsh(A)[0])


def is_psd(M, tol: float = 0.0) -> bool:
    """True iff ``lambda_min >= -tol * (1 + |lambda_max|)``."""
    if tol < 0:
        raise ValueError("tol must be non-negative")
    w = np.linalg.eigvalsh(symmetrize(np.atleast_2d(np.asarray(M, dtype=float))))
    return bool(w[0] >= -tol * (1.0 + abs(w[-1])))


def expm(M) -> np.ndarray:
    A = as_matrix(M)
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expm needs a square matrix, got {A.shape}")
    return sla.expm(A)


def zoh_discretize(A_c, B_c, T: float):
    """Zero-order-hold discretization through one augmented exponential."""
    A_c = as_matrix(A_c, "A_c")
    B_c = as_matrix(B_c, "B_c")
    n = A_c.shape[0]
    if A_c.shape != (n, n) or B_c.shape[0] != n:
        raise DimensionMismatch(f"A_c {A_c.shape} and B_c {B_c.shape} do not conform")
    if not T > 0:
        raise ValueError("sampling period must be positive")
    m = B_c.shape[1]
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A_c
    M[:n, n:] = B_c
    E = sla.expm(M * T)
    return E[:n, :n].copy(), E[:n, n:].copy()
