from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ddtrigger.sysdata import (DataRep, ExperimentData, GapError, InsufficientTail, LtiModel, NoiseBound,
                               ParseError, SchemaError, UnboundedSet, assemble_theta,
                               box_noise_bound, consistent_set_bounds, export_csv,
                               generate_experiment, ingest_csv, lift_data, lifted_matrices,
                               lifted_noise_bound, _theta)

BW = 0.01 * np.eye(2)


def test_generate_trivial():
    m = LtiModel(np.array([[1.0]]), np.array([[1.0]]))
    g = generate_experiment(m, np.eye(1), 3, 0.0, 0, inputs=[1, 1, 1])
    assert np.array_equal(g.data.X, [[0, 1, 2]])
    assert np.array_equal(g.data.X_plus, [[1, 2, 3]])
    z = generate_experiment(m, np.eye(1), 5, 0.0, 0, inputs=np.zeros(5))
    assert not np.any(z.data.states)


def test_generated_residual_and_replay(plant01):
    g = generate_experiment(plant01, BW, 800, 0.01, 0)
    d = g.data
    res = d.X_plus - plant01.A @ d.X - plant01.B @ d.U
    assert np.allclose(res, BW @ g.noise, atol=1e-15)
    assert np.all(np.linalg.norm(res, axis=0) <= 0.01 * 0.01 * np.sqrt(2) + 1e-15)
    x = np.zeros(2)
    for t in range(d.length):
        x = plant01.A @ x + plant01.B @ d.U[:, t] + BW @ g.noise[:, t]
        assert np.array_equal(x, d.X_plus[:, t])


def test_csv_roundtrip(tmp_path, plant01):
    d = generate_experiment(plant01, BW, 50, 0.01, 4).data
    p = tmp_path / "d.csv"
    export_csv(d, p)
    back = ingest_csv(p, B_w=BW)
    assert np.array_equal(back.states, d.states) and np.array_equal(back.inputs, d.inputs)


def test_csv_small_and_errors(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("t,x1,u1\n0,0,1\n1,1,1\n2,2,1\n3,3,\n")
    d = ingest_csv(p)
    assert d.rho == 3 and np.array_equal(d.X_plus, [[1, 2, 3]])
    p.write_text("t,x1,u1\n0,0,1\n2,1,1\n3,2,\n")
    with pytest.raises(GapError):
        ingest_csv(p)
    p.write_text("t,x1,u1,z\n0,0,1,0\n1,1,1,0\n")
    with pytest.raises(SchemaError):
        ingest_csv(p)
    p.write_text("t,x1,u1\n0,0,abc\n1,1,\n")
    with pytest.raises(ParseError, match="line 2"):
        ingest_csv(p)


def test_box_bound():
    b = box_noise_bound(0.001, 800, 2)
    assert np.allclose(b.R_d, 8e-4 * np.eye(2))
    z = box_noise_bound(0.0, 5, 1)
    assert z.admits(np.zeros((1, 5))) and not z.admits(1e-3 * np.ones((1, 5)))
    rng = np.random.default_rng(1)
    for _ in range(100):
        W = rng.uniform(-0.01, 0.01, size=(2, 800))
        assert box_noise_bound(0.01, 800, 2).admits(W)


def test_theta_zero_data():
    d = ExperimentData(np.zeros((1, 4)), np.zeros((1, 3)), np.eye(1), 3)
    rep = assemble_theta(d, NoiseBound(-np.eye(3), np.zeros((3, 1)), np.zeros((1, 1))))
    assert not np.any(rep.theta)


def test_membership_and_outside_points(plant01):
    g = generate_experiment(plant01, BW, 800, 0.01, 0)
    rep = assemble_theta(g.data, box_noise_bound(0.01, 800, 2))
    Z = np.hstack([plant01.A, plant01.B])
    assert rep.contains(Z)
    eb = consistent_set_bounds(rep)
    assert np.linalg.norm(Z - eb.center, 2) <= eb.radius
    rng = np.random.default_rng(2)
    for _ in range(50):
        D = rng.normal(size=(2, 2))
        D *= 2.5 * eb.radius / np.linalg.norm(D, 2)
        assert not rep.contains(np.hstack([plant01.A + D, plant01.B]))


def test_noiseless_singleton(plant01):
    g = generate_experiment(plant01, BW, 200, 0.0, 5)
    eb = consistent_set_bounds(assemble_theta(g.data, box_noise_bound(0.0, 200, 2)))
    assert eb.radius <= 1e-6
    assert np.allclose(eb.center, np.hstack([plant01.A, plant01.B]), atol=1e-6)


def test_radius_homogeneity(plant01):
    g = generate_experiment(plant01, BW, 100, 0.01, 0)
    rep = assemble_theta(g.data, box_noise_bound(0.01, 100, 2))
    p = rep.p
    th = rep.theta.copy()
    th[:p, p:] = 0
    th[p:, :p] = 0
    r1 = consistent_set_bounds(DataRep(th, p)).radius
    th4 = th.copy()
    th4[p:, p:] *= 4
    r2 = consistent_set_bounds(DataRep(th4, p)).radius
    assert np.isclose(r2, 2 * r1)
    with pytest.raises(UnboundedSet):
        consistent_set_bounds(DataRep(-th, p))


def _qmi_fraction(a, b, X, U, Xp, bw, Q, S, R):
    """Exact W-existence test: W = (Xp - a X - b U) / bw must satisfy the bound."""
    W = [(xp - a * x - b * u) / bw for x, u, xp in zip(X, U, Xp)]
    rho = len(W)
    val = sum(W[i] * Q[i][j] * W[j] for i in range(rho) for j in range(rho))
    val += 2 * sum(W[i] * S[i] for i in range(rho)) + R
    return val


@pytest.mark.parametrize("seed", range(4))
def test_lemma1_grid_equivalence(seed):
    rng = np.random.default_rng(seed)
    rho = int(rng.integers(1, 5))
    q = lambda lo, hi: Fraction(int(rng.integers(lo, hi)), 8)
    X = [q(-16, 16) for _ in range(rho)]
    U = [q(-16, 16) for _ in range(rho)]
    Xp = [q(-16, 16) for _ in range(rho)]
    bw = Fraction(1, 2)
    # negative definite Q_d with small rational entries
    Mq = [[q(-4, 4) for _ in range(rho)] for _ in range(rho)]
    Q = [[-sum(Mq[k][i] * Mq[k][j] for k in range(rho)) - (1 if i == j else 0)
          for j in range(rho)] for i in range(rho)]
    S = [q(-4, 4) for _ in range(rho)]
    R = Fraction(int(rng.integers(8, 200)), 4)
    bound = NoiseBound(np.array(Q, dtype=float), np.array([[float(v)] for v in S]),
                       np.array([[float(R)]]))
    row = lambda vals: np.array([[float(v) for v in vals]])
    rep = DataRep(_theta(row(X), row(U), row(Xp), np.array([[float(bw)]]), bound), 2)
    grid = [Fraction(k, 10) - 2 for k in range(41)]
    mismatches, near = 0, 0
    for a in grid:
        for b in grid:
            exact = _qmi_fraction(a, b, X, U, Xp, bw, Q, S, R)
            if abs(exact) < Fraction(1, 10**6):
                near += 1
                continue
            got = rep.contains(np.array([[float(a), float(b)]]))
            mismatches += got != (exact >= 0)
    assert near == 0
    assert mismatches == 0


def test_lift_s1_and_noiseless_s2():
    m = LtiModel(np.array([[0.5]]), np.array([[1.0]]))
    g = generate_experiment(m, np.eye(1), 10, 0.0, 0, tail=3)
    b = box_noise_bound(0.0, 10, 1)
    assert np.array_equal(lift_data(g.data, 1, b).rep.theta, assemble_theta(g.data, b).theta)
    L2 = lift_data(g.data, 2, lifted_noise_bound(0.0, g.data, b, 2, norm_A=0.5))
    assert L2.rep.contains(np.array([[0.25, 0.5, 1.0]]), tol=1e-12)
    with pytest.raises(InsufficientTail):
        lift_data(g.data, 5, b)


def test_lifting_consistency(plant01):
    g = generate_experiment(plant01, BW, 100, 0.0, 1, tail=10)
    for s in (1, 4, 10):
        As, Bs = lifted_matrices(plant01, s)
        L = lift_data(g.data, s, lifted_noise_bound(0.0, g.data, box_noise_bound(0, 100, 2), s, norm_A=1.0))
        assert np.allclose(L.X_plus - As @ g.data.X - Bs @ L.U, 0, atol=1e-14)


def test_paper_lifting_builds(plant01):
    g = generate_experiment(plant01, BW, 800, 0.01, 0)
    d = g.data.truncated(750)
    base = box_noise_bound(0.01, 750, 2)
    na = consistent_set_bounds(assemble_theta(d, base)).norm_A
    for s in range(1, 51):
        rep = lift_data(d, s, lifted_noise_bound(0.01 * np.sqrt(2), d, base, s, norm_A=na)).rep
        assert rep.theta.shape == (2 + s + 2, 2 + s + 2)


def test_lifted_bound_monte_carlo():
    a, wbar, rho, s = 0.9, 0.05, 20, 3
    m = LtiModel(np.array([[a]]), np.array([[1.0]]))
    g = generate_experiment(m, np.eye(1), rho, 0.0, 0, tail=s)
    base = box_noise_bound(wbar, rho, 1)
    na = consistent_set_bounds(assemble_theta(g.data, box_noise_bound(1e-9, rho, 1))).norm_A
    lb = lifted_noise_bound(wbar, g.data, base, s, norm_A=na)
    assert np.isclose(lb.R_d[0, 0] / rho, ((1 + a + a * a) * wbar) ** 2, rtol=1e-6)
    rng = np.random.default_rng(0)
    gains = np.array([a * a, a, 1.0])
    for _ in range(1000):
        Wl = rng.uniform(-wbar, wbar, size=(s, rho))
        assert lb.admits((gains @ Wl)[None, :])
    assert np.all(lifted_noise_bound(0.0, g.data, box_noise_bound(0, rho, 1), 4, norm_A=na).R_d == 0)


@given(st.floats(0.0, 0.1), st.integers(1, 30))
def test_box_bound_property(wbar, rho):
    b = box_noise_bound(wbar, rho, 2)
    assert np.allclose(b.R_d, wbar ** 2 * rho * np.eye(2))
    assert lifted_noise_bound(wbar, None, b, 1) is b
