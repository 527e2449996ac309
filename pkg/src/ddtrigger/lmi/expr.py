"""Matrix-valued affine expressions over named decision variables.

An :class:`Affine` stores a constant matrix and, for every variable it
depends on, a coefficient tensor ``C[i, j, p]`` giving the derivative of entry
``(i, j)`` with respect to parameter ``p`` of that variable.  Left and right
multiplication by constant matrices, transposition, sums and block assembly
all act on the tensors directly, so linearity holds by construction.
"""
from __future__ import annotations

import numbers

import numpy as np


class Affine:
    __array_ufunc__ = None  # let ndarray @ Affine dispatch to __rmatmul__

    def __init__(self, const, terms=None):
        self.const = np.atleast_2d(np.asarray(const, dtype=float))
        self.terms = {}
        for name, C in (terms or {}).items():
            C = np.asarray(C, dtype=float)
            if C.shape[:2] != self.const.shape:
                raise ValueError(f"term {name!r} has shape {C.shape[:2]}, "
                                 f"expected {self.const.shape}")
            self.terms[name] = C

    @property
    def shape(self):
        return self.const.shape

    @property
    def variables(self):
        return tuple(self.terms)

    @staticmethod
    def lift(v) -> "Affine":
        return v if isinstance(v, Affine) else Affine(v)

    def copy(self) -> "Affine":
        return Affine(self.const.copy(), {k: v.copy() for k, v in self.terms.items()})

    # arithmetic ---------------------------------------------------------
    def _combine(self, other, sign):
        other = Affine.lift(other)
        if other.shape != self.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        terms = {k: v.copy() for k, v in self.terms.items()}
        for k, v in other.terms.items():
            terms[k] = terms[k] + sign * v if k in terms else sign * v
        return Affine(self.const + sign * other.const, terms)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __radd__(self, other):
        return Affine.lift(other)._combine(self, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __rsub__(self, other):
        return Affine.lift(other)._combine(self, -1.0)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, c):
        if not isinstance(c, numbers.Real):
            return NotImplemented
        c = float(c)
        return Affine(c * self.const, {k: c * v for k, v in self.terms.items()})

    __rmul__ = __mul__

    def __matmul__(self, M):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return Affine(self.const @ M,
                      {k: np.einsum("ijp,jl->ilp", v, M) for k, v in self.terms.items()})

    def __rmatmul__(self, M):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return Affine(M @ self.const,
                      {k: np.einsum("ij,jlp->ilp", M, v) for k, v in self.terms.items()})

    @property
    def T(self):
        return Affine(self.const.T, {k: v.transpose(1, 0, 2) for k, v in self.terms.items()})

    def scale(self, M) -> "Affine":
        """Product of a 1x1 expression with a constant matrix."""
        if self.shape != (1, 1):
            raise ValueError("scale() needs a 1x1 expression")
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return Affine(self.const[0, 0] * M,
                      {k: M[:, :, None] * v[0, 0][None, None, :] for k, v in self.terms.items()})

    # evaluation -----------------------------------------------------------
    def value(self, params: dict) -> np.ndarray:
        """Evaluate at flat parameter vectors ``params[name]``."""
        out = self.const.copy()
        for k, v in self.terms.items():
            out += v @ np.asarray(params[k], dtype=float)
        return out

    def linear_part(self, params: dict) -> np.ndarray:
        out = np.zeros(self.shape)
        for k, v in self.terms.items():
            out += v @ np.asarray(params[k], dtype=float)
        return out


def sym(e):
    """``e + e^T``."""
    return e + e.T


def bmat(rows) -> Affine:
    """Block assembly of Affine / ndarray / None cells (None means zero)."""
    nr, nc = len(rows), len(rows[0])
    heights = [None] * nr
    widths = [None] * nc
    for i, row in enumerate(rows):
        if len(row) != nc:
            raise ValueError("ragged block layout")
        for j, cell in enumerate(row):
            if cell is None:
                continue
            r, c = Affine.lift(cell).shape
            if heights[i] not in (None, r) or widths[j] not in (None, c):
                raise ValueError(f"block ({i},{j}) of shape {(r, c)} does not fit")
            heights[i], widths[j] = r, c
    if None in heights or None in widths:
        raise ValueError("every block row and column needs at least one sized cell")
    ro = np.concatenate([[0], np.cumsum(heights)])
    co = np.concatenate([[0], np.cumsum(widths)])
    const = np.zeros((ro[-1], co[-1]))
    terms = {}
    for i, row in enumerate(rows):
        for j, cell in enumerate(row):
            if cell is None:
                continue
            e = Affine.lift(cell)
            const[ro[i]:ro[i + 1], co[j]:co[j + 1]] = e.const
            for k, v in e.terms.items():
                if k not in terms:
                    terms[k] = np.zeros((ro[-1], co[-1], v.shape[2]))
                terms[k][ro[i]:ro[i + 1], co[j]:co[j + 1], :] += v
    return Affine(const, terms)
