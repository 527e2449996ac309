import numpy as np
import pytest
from hypothesis import given, strategies as st

from ddtrigger.ets_design import EtsDesign, EtsParams, build_theorem2, design
from ddtrigger.simulate import run_ets
from ddtrigger.sts import (DualRep, InertiaMismatch, LiftCache, SingularTheta, StsParams, certify,
                           dual_representation, gamma_data, gamma_model, lifted_gain,
                           prepare_lifted, q_data_check, q_model)
from ddtrigger.sysdata import (DataRep, LtiModel, assemble_theta, box_noise_bound,
                               generate_experiment)

TOY = LtiModel(np.array([[0.5]]), np.array([[1.0]]))
BW = 0.01 * np.eye(2)


def toy_params(sig, s_bar=10, step=1):
    return StsParams(sig, sig, np.eye(1), np.array([[-0.3]]), s_bar=s_bar, step=step)


def loop_values(a, b, k, sig, xk, s_bar):
    out, x = [], xk
    for _ in range(s_bar):
        x = a * x + b * k * xk
        e = x - xk
        out.append(sig * x * x + sig * xk * xk - e * e)
    return out


def test_lifted_gain():
    g = lifted_gain(np.array([[1.0, 2.0]]), 3)
    assert g.matrix.shape == (3, 2) and np.all(g.matrix == [1.0, 2.0])


def test_q_model_examples():
    p = toy_params(0.25)
    assert all(q_model(TOY, p, np.zeros(1), s) == 0 for s in range(1, 5))
    ident = LtiModel(np.eye(2), np.zeros((2, 1)))
    p2 = StsParams(0.3, 0.4, np.diag([1.0, 2.0]), np.zeros((1, 2)))
    x = np.array([1.0, -1.0])
    assert np.isclose(q_model(ident, p2, x, 3), 0.7 * 3.0)
    want = loop_values(0.5, 1.0, -0.3, 0.25, 1.0, 10)
    got = [q_model(TOY, p, np.ones(1), s) for s in range(1, 11)]
    assert np.allclose(got, want, rtol=1e-13)


def test_gamma_model_examples():
    assert gamma_model(TOY, toy_params(0.25), np.zeros(1)) == 10
    assert gamma_model(TOY, toy_params(5.0), np.ones(1)) == 10
    vals = loop_values(0.5, 1.0, -0.3, 0.01, 1.0, 10)
    first_bad = next(i for i, v in enumerate(vals, start=1) if v < 0)
    assert gamma_model(TOY, toy_params(0.01), np.ones(1)) == max(first_bad - 1, 1)


@given(st.floats(-10, 10).filter(lambda c: abs(c) > 1e-3), st.floats(-3, 3), st.floats(-3, 3))
def test_gamma_model_scale_invariant(c, a, b):
    m = LtiModel(np.array([[1.0, 0.1], [0.0, 0.99]]), np.array([[0.0005], [0.01]]))
    p = StsParams(0.3, 0.3, np.array([[1.0, 0.1], [0.1, 2.0]]), np.array([[-1.0, -7.0]]), s_bar=30)
    x = np.array([a, b])
    if np.linalg.norm(x) < 1e-3:
        return
    assert gamma_model(m, p, c * x) == gamma_model(m, p, x)


def test_ets_sts_degeneration():
    """With eta pinned at zero the ETS trigger fires at the first sampled
    horizon where the waiting condition fails, and the STS interval stops one
    sampling period before it."""
    h = 2
    for sig in (0.05, 0.2, 0.4):
        p_sts = StsParams(sig, sig, np.eye(1), np.array([[-0.3]]), s_bar=40, step=h)
        vals = loop_values(0.5, 1.0, -0.3, sig, 1.0, 40)
        first_bad = next((s for s in range(h, 41, h) if vals[s - 1] < 0), None)
        assert first_bad is not None and first_bad < 40
        assert gamma_model(TOY, p_sts, np.ones(1)) == max(first_bad - h, h)

        class P:  # unvalidated harness parameters emulating theta -> infinity
            runtime_h, s1, s2, lam, theta, eta0, periodic = h, sig, sig, 1.0, 1e15, 0.0, False
        d = EtsDesign(np.array([[-0.3]]), np.eye(1), {}, "analysis")
        tr, _ = run_ets(TOY, d, P, np.ones(1), 60, probes=False)
        assert tr.transmission_times[1] == first_bad


@pytest.fixture(scope="module")
def va_setup():
    m = LtiModel.from_continuous([[0, 1], [0, -0.1]], [[0], [0.1]], 0.1)
    g = generate_experiment(m, BW, 800, 0.01, 0)
    rep = assemble_theta(g.data, box_noise_bound(0.01, 800, 2))
    p = EtsParams(h_low=1, h_high=2, sigma1=0.5, sigma2=0.5, theta=2.0, lam=0.2)
    d = design(lambda hs: build_theorem2(rep, p, hs), p, "data")
    sp = StsParams(0.5, 0.5, d.Omega, d.K, s_bar=50, step=1)
    cache = prepare_lifted(g.data.truncated(750), 0.01, 50)
    return m, sp, cache


def test_theorem3_soundness(va_setup):
    m, sp, cache = va_setup
    rng = np.random.default_rng(0)
    certified = 0
    for _ in range(500):
        x = rng.normal(size=2) * rng.uniform(0.1, 5)
        s = int(rng.integers(1, 51))
        ok, gam = certify(cache.duals[s], sp, x)
        if ok:
            certified += 1
            assert q_data_check(cache.duals[s], sp, x, s, gam)
            assert q_model(m, sp, x, s) >= 0
    assert certified > 50


def test_gamma_data_scale_and_zero(va_setup):
    m, sp, cache = va_setup
    assert gamma_data(cache, sp, np.zeros(2)) == 50
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = rng.normal(size=2)
        c = rng.choice([-100.0, -0.01, 0.5, 37.0])
        assert gamma_data(cache, sp, c * x) == gamma_data(cache, sp, x)


def test_conservatism_near_noiseless(va_setup):
    m, sp, _ = va_setup
    wbar = 1e-6
    g = generate_experiment(m, BW, 800, wbar, 3)
    cache = prepare_lifted(g.data.truncated(750), wbar, 50)
    rng = np.random.default_rng(2)
    for _ in range(100):
        x = rng.normal(size=2)
        assert gamma_data(cache, sp, x) <= gamma_model(m, sp, x)


def test_x_zero_direct_evaluation(va_setup):
    _, sp, cache = va_setup
    d = cache.duals[3]
    # at x_k = 0 only the identity blocks survive: (sigma1-1) Omega + gamma R~ must be PSD
    n = 2
    Rt = -d.theta_tilde[:n, :n]
    for gam in (1e-8, 1e-3, 1.0):
        M = (sp.sigma1 - 1) * sp.Omega + gam * Rt
        direct = np.linalg.eigvalsh(M)[0] >= -1e-12 * (1 + abs(np.linalg.eigvalsh(M)[-1]))
        assert q_data_check(d, sp, np.zeros(2), 3, gam) == direct
    with pytest.raises(ValueError):
        q_data_check(d, sp, np.ones(2), 4, 1.0)


def test_dual_representation_errors():
    p = 3
    th = np.diag([-1.0, -1.0, -1.0, 1.0, 1.0])
    d = dual_representation(DataRep(th, p), 1)
    assert np.allclose(d.theta_tilde, np.diag([-1.0, -1.0, 1.0, 1.0, 1.0]))
    with pytest.raises(InertiaMismatch):
        dual_representation(DataRep(np.diag([-1.0, -1.0, -1.0, -1.0, 1.0]), p), 1)
    with pytest.raises(InertiaMismatch):
        dual_representation(DataRep(np.diag([-1.0, 1.0, -1.0, 1.0, 1.0]), p), 1)
    with pytest.raises(SingularTheta):
        dual_representation(DataRep(np.diag([-1.0, -1e-14, -1.0, 1.0, 1.0]), p), 1)


def test_dual_blocks_match_full_inverse(va_setup):
    _, _, cache = va_setup
    m = LtiModel.from_continuous([[0, 1], [0, -0.1]], [[0], [0.1]], 0.1)
    g = generate_experiment(m, BW, 100, 0.05, 0)
    rep = assemble_theta(g.data, box_noise_bound(0.05, 100, 2))
    d = dual_representation(rep, 1)
    inv = np.linalg.inv(rep.theta)
    p, n = rep.p, rep.n
    Qt, St, Rt = inv[:p, :p], inv[:p, p:], inv[p:, p:]
    want = np.block([[-Rt, St.T], [St, -Qt]])
    assert np.allclose(d.theta_tilde, want, rtol=1e-6, atol=1e-8 * np.abs(want).max())


def test_cache_roundtrip(tmp_path, va_setup):
    _, sp, cache = va_setup
    path = tmp_path / "c.npz"
    cache.save(path)
    back = LiftCache.load(path)
    assert set(back.duals) == set(cache.duals)
    assert np.array_equal(back.duals[7].theta_tilde, cache.duals[7].theta_tilde)
    x = np.array([1.0, -0.5])
    assert gamma_data(back, sp, x) == gamma_data(cache, sp, x)
