"""Decision variables, affine matrix constraints and problem containers."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .expr import Affine

KINDS = ("scalar", "full", "sym", "psd")


class BadProblem(ValueError):
    """Malformed problem: unknown variable, non-square or non-linear map."""


class MissingVariable(KeyError):
    pass


@dataclass(frozen=True)
class VarSpec:
    """A named decision variable.

    ``psd`` variables are symmetric and carry an implicit strict ``X > 0``
    constraint; scalars may carry a strict lower bound.
    """

    name: str
    kind: str
    shape: tuple
    lower: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BadProblem(f"unknown variable kind {self.kind!r}")
        if self.kind in ("sym", "psd") and self.shape[0] != self.shape[1]:
            raise BadProblem(f"{self.name}: symmetric variables must be square")
        if self.kind == "scalar" and tuple(self.shape) != (1, 1):
            raise BadProblem(f"{self.name}: scalar shape must be (1, 1)")

    @property
    def size(self) -> int:
        r, c = self.shape
        if self.kind in ("sym", "psd"):
            return r * (r + 1) // 2
        return r * c

    def basis(self) -> np.ndarray:
        """Tensor ``(r, c, size)``: the variable as a function of its parameters."""
        r, c = self.shape
        B = np.zeros((r, c, self.size))
        if self.kind in ("sym", "psd"):
            iu = np.triu_indices(r)
            for p, (i, j) in enumerate(zip(*iu)):
                B[i, j, p] = 1.0
                B[j, i, p] = 1.0
        else:
            B.reshape(r * c, -1)[np.arange(r * c), np.arange(r * c)] = 1.0
        return B

    def to_params(self, M) -> np.ndarray:
        M = np.atleast_2d(np.asarray(M, dtype=float))
        if M.shape != tuple(self.shape):
            raise BadProblem(f"{self.name}: value of shape {M.shape}, expected {self.shape}")
        if self.kind in ("sym", "psd"):
            return 0.5 * (M + M.T)[np.triu_indices(self.shape[0])]
        return M.ravel().copy()

    def from_params(self, p) -> np.ndarray:
        return self.basis() @ np.asarray(p, dtype=float)


@dataclass
class AffineConstraint:
    """``expr >> 0`` or ``expr << 0``, strict up to the solver margin."""

    name: str
    expr: Affine
    sense: str = ">>"

    def __post_init__(self):
        if self.sense not in (">>", "<<"):
            raise BadProblem(f"constraint {self.name}: sense must be '>>' or '<<'")
        r, c = self.expr.shape
        if r != c:
            raise BadProblem(f"constraint {self.name} is not square ({r}x{c})")

    @property
    def dim(self) -> int:
        return self.expr.shape[0]

    def normalized(self) -> Affine:
        """Symmetric part with sense folded in, so the target is ``>> 0``."""
        e = self.expr if self.sense == ">>" else -self.expr
        return 0.5 * (e + e.T)


@dataclass
class LmiProblem:
    variables: dict = field(default_factory=dict)
    constraints: list = field(default_factory=list)
    equalities: list = field(default_factory=list)
    label: str = ""

    def variable(self, name, kind="full", shape=(1, 1), lower=None) -> Affine:
        if name in self.variables:
            raise BadProblem(f"duplicate variable {name!r}")
        if kind == "scalar":
            shape = (1, 1)
        elif isinstance(shape, int):
            shape = (shape, shape)
        spec = VarSpec(name, kind, tuple(int(s) for s in shape), lower)
        self.variables[name] = spec
        return Affine(np.zeros(spec.shape), {name: spec.basis()})

    def add(self, name, expr, sense=">>"):
        self.constraints.append(AffineConstraint(name, Affine.lift(expr), sense))

    def add_equality(self, name, expr):
        """Linear equality ``expr == 0`` (eliminated before solving)."""
        self.equalities.append((name, Affine.lift(expr)))

    def all_constraints(self):
        """User constraints plus the implicit ones from ``psd`` and bounded scalars."""
        out = []
        for spec in self.variables.values():
            if spec.kind == "psd":
                out.append(AffineConstraint(f"{spec.name}>0",
                                            Affine(np.zeros(spec.shape), {spec.name: spec.basis()})))
            elif spec.kind == "scalar" and spec.lower is not None:
                out.append(AffineConstraint(f"{spec.name}>{spec.lower:g}",
                                            Affine(-spec.lower * np.ones((1, 1)),
                                                   {spec.name: spec.basis()})))
        return out + list(self.constraints)

    @property
    def num_params(self) -> int:
        return sum(s.size for s in self.variables.values())

    def offsets(self):
        out, k = {}, 0
        for name, spec in self.variables.items():
            out[name] = (k, k + spec.size)
            k += spec.size
        return out

    def validate(self, rng=None):
        """Check variable references and verify additivity of every map."""
        rng = np.random.default_rng(0) if rng is None else rng
        known = set(self.variables)
        exprs = [(c.name, c.expr) for c in self.constraints] + list(self.equalities)
        for name, e in exprs:
            unknown = set(e.variables) - known
            if unknown:
                raise BadProblem(f"constraint {name} references unknown variables {sorted(unknown)}")
            for k, C in e.terms.items():
                if C.shape[2] != self.variables[k].size:
                    raise BadProblem(f"constraint {name}: coefficient size mismatch for {k}")
            if not e.terms:
                continue
            v = {k: rng.standard_normal(self.variables[k].size) for k in e.variables}
            w = {k: rng.standard_normal(self.variables[k].size) for k in e.variables}
            vw = {k: v[k] + w[k] for k in v}
            lhs = e.linear_part(vw)
            rhs = e.linear_part(v) + e.linear_part(w)
            if np.max(np.abs(lhs - rhs)) > 1e-10 * (1.0 + np.max(np.abs(lhs))):
                raise BadProblem(f"constraint {name} is not linear in its variables")

    # assignments ------------------------------------------------------------
    def params_from_assignment(self, assignment: dict) -> dict:
        out = {}
        for name, spec in self.variables.items():
            if name not in assignment:
                raise MissingVariable(name)
            out[name] = spec.to_params(assignment[name])
        return out

    def assignment_from_vector(self, v) -> dict:
        out = {}
        for name, (a, b) in self.offsets().items():
            spec = self.variables[name]
            M = spec.from_params(v[a:b])
            out[name] = float(M[0, 0]) if spec.kind == "scalar" else M
        return out

    # serialization ----------------------------------------------------------
    def to_json(self) -> str:
        def dump_expr(e):
            return {"const": e.const.tolist(),
                    "terms": {k: np.moveaxis(v, 2, 0).tolist() for k, v in e.terms.items()}}
        doc = {
            "label": self.label,
            "variables": [{"name": s.name, "kind": s.kind, "shape": list(s.shape),
                           "lower": s.lower} for s in self.variables.values()],
            "constraints": [dict(name=c.name, sense=c.sense, **dump_expr(c.expr))
                            for c in self.constraints],
            "equalities": [dict(name=n, **dump_expr(e)) for n, e in self.equalities],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "LmiProblem":
        doc = json.loads(text)
        prob = cls(label=doc.get("label", ""))
        for v in doc["variables"]:
            prob.variable(v["name"], v["kind"], tuple(v["shape"]), v.get("lower"))

        def load_expr(d):
            return Affine(np.array(d["const"]),
                          {k: np.moveaxis(np.array(v, dtype=float), 0, 2) for k, v in d["terms"].items()})
        for c in doc["constraints"]:
            prob.add(c["name"], load_expr(c), c["sense"])
        for e in doc.get("equalities", []):
            prob.add_equality(e["name"], load_expr(e))
        return prob


@dataclass(frozen=True)
class ConstraintValue:
    name: str
    lambda_min: float
    satisfied: bool


def eval_constraints(problem: LmiProblem, assignment: dict, threshold: float = 0.0,
                     eq_tol: float = 1e-9):
    """Evaluate every constraint exactly at ``assignment``.

    Inequalities report the smallest eigenvalue after sense normalization and
    are satisfied when it exceeds ``threshold``.  Equalities report minus the
    largest absolute residual.
    """
    params = problem.params_from_assignment(assignment)
    out = []
    for c in problem.all_constraints():
        M = c.normalized().value(params)
        lam = float(np.linalg.eigvalsh(M)[0])
        out.append(ConstraintValue(c.name, lam, lam > threshold))
    for name, e in problem.equalities:
        R = e.value(params)
        r = float(np.max(np.abs(R))) if R.size else 0.0
        scale = 1.0 + max((float(np.max(np.abs(v))) for v in e.terms.values()), default=0.0)
        out.append(ConstraintValue(name, -r, r <= eq_tol * scale))
    return out
