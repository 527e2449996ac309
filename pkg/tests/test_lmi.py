import json

import numpy as np
import pytest
from scipy.linalg import solve_discrete_lyapunov

from ddtrigger.lmi import (INFEASIBLE, STRICT, UNKNOWN, BadProblem, LmiProblem, MissingVariable,
                           eval_constraints, solve_feasibility)
from ddtrigger.sysdata import LtiModel

from conftest import REFERENCE_K


def scalar_problem(scale=1.0):
    prob = LmiProblem()
    p = prob.variable("p", "scalar")
    one = np.ones((1, 1))
    prob.add("pos", scale * (p @ one), ">>")
    prob.add("upper", scale * (one - p @ one), ">>")
    return prob


def test_scalar_interval():
    res = solve_feasibility(scalar_problem())
    assert res.status == STRICT
    assert 0 < float(res.witness["p"]) < 1
    res_c = solve_feasibility(scalar_problem(), target="center")
    assert abs(float(res_c.witness["p"]) - 0.5) < 1e-4


def lyap_problem(A):
    n = A.shape[0]
    prob = LmiProblem()
    P = prob.variable("P", "psd", n)
    prob.add("lyap", A.T @ P @ A - P, "<<")
    return prob


def test_unstable_scalar_infeasible():
    res = solve_feasibility(lyap_problem(np.array([[2.0]])))
    assert res.status in (INFEASIBLE, UNKNOWN)
    assert res.status == INFEASIBLE


def test_closed_loop_lyapunov_feasible(plant001):
    Acl = plant001.A + plant001.B @ REFERENCE_K
    prob = lyap_problem(Acl)
    res = solve_feasibility(prob)
    assert res.status == STRICT
    P = res.witness["P"]
    # the witness satisfies the strict inequality that the Lyapunov fixed point
    # certifies: A'PA - P = -Q with Q > 0, and the fixed point for that Q is P
    Q = P - Acl.T @ P @ Acl
    assert np.linalg.eigvalsh(Q)[0] > 0
    assert np.allclose(solve_discrete_lyapunov(Acl.T, Q), P, rtol=1e-6, atol=1e-9)
    for cv in eval_constraints(prob, res.witness, threshold=res.delta / 2):
        assert cv.satisfied


def test_eval_constraints_zero_assignment_flags():
    prob = scalar_problem()
    vals = eval_constraints(prob, {"p": np.zeros((1, 1))}, threshold=1e-9)
    assert any(not v.satisfied for v in vals)
    with pytest.raises(MissingVariable):
        eval_constraints(prob, {})


def test_witness_recheck_and_scaling():
    for scale in (1.0, 2.0):
        res = solve_feasibility(scalar_problem(scale))
        assert res.status == STRICT
        assert all(v.lambda_min >= res.delta / 2 for v in eval_constraints(scalar_problem(scale), res.witness))


def test_determinism():
    a = solve_feasibility(lyap_problem(np.array([[0.5, 0.2], [0.0, 0.7]])))
    b = solve_feasibility(lyap_problem(np.array([[0.5, 0.2], [0.0, 0.7]])))
    assert a.status == b.status == STRICT
    assert a.witness["P"].tobytes() == b.witness["P"].tobytes()


def test_bad_problem():
    prob = LmiProblem()
    prob.variable("x", "scalar")
    with pytest.raises((BadProblem, ValueError)):
        prob.variable("x", "scalar")


def test_json_roundtrip():
    prob = lyap_problem(np.array([[0.5]]))
    again = LmiProblem.from_json(prob.to_json())
    json.loads(prob.to_json())
    r1, r2 = solve_feasibility(prob), solve_feasibility(again)
    assert r1.status == r2.status == STRICT
    assert np.allclose(r1.witness["P"], r2.witness["P"])


def test_matches_cvxpy_when_available():
    cp = pytest.importorskip("cvxpy")
    A = np.array([[1.02, 0.1], [0.0, 0.9]])
    for Aq, expect in ((A, False), (0.9 * A, True)):
        P = cp.Variable((2, 2), symmetric=True)
        c = cp.Problem(cp.Minimize(0), [P >> np.eye(2), Aq.T @ P @ Aq - P << -1e-3 * np.eye(2)])
        c.solve()
        ours = solve_feasibility(lyap_problem(Aq)).status == STRICT
        assert ours == expect == (c.status == "optimal")
