"""Reference implementations of the hot loops (used when the compiled module
is unavailable or ``DDTRIGGER_PURE=1``)."""
from __future__ import annotations

import numpy as np


def ets_loop(A, B, K, Omega, x0, horizon, h, sigma1, sigma2, lam, theta, eta0, periodic):
    """Closed loop under the dynamic event-triggering rule.

    Returns ``(x, xk, sampled, transmitted, eta, rho, cond)`` where ``x`` has
    ``horizon + 1`` rows and the rest are per step ``t = 0..horizon-1``;
    ``eta`` holds the value valid on ``[t, t+1)``, ``rho``/``cond`` are NaN
    between sampling instants.
    """
    A = np.ascontiguousarray(A, dtype=float)
    BK = np.ascontiguousarray(B @ K, dtype=float)
    Om = np.ascontiguousarray(Omega, dtype=float)
    n = A.shape[0]
    x = np.empty((horizon + 1, n))
    xk_hist = np.empty((horizon, n))
    sampled = np.zeros(horizon, dtype=np.int8)
    transmitted = np.zeros(horizon, dtype=np.int8)
    eta = np.empty(horizon)
    rho = np.full(horizon, np.nan)
    cond = np.full(horizon, np.nan)
    x[0] = x0
    xk = np.array(x0, dtype=float)
    eta_c = 0.0 if periodic else float(eta0)
    for t in range(horizon):
        xt = x[t]
        if t % h == 0:
            sampled[t] = 1
            if t == 0 or periodic:
                xk = xt.copy()
                transmitted[t] = 1
                r = (sigma1 * xt @ Om @ xt + sigma2 * xk @ Om @ xk)
            else:
                e = xt - xk
                r = sigma1 * xt @ Om @ xt + sigma2 * xk @ Om @ xk - e @ Om @ e
                c = eta_c + theta * r
                cond[t] = c
                if c < 0:
                    xk = xt.copy()
                    transmitted[t] = 1
                    r = sigma1 * xt @ Om @ xt + sigma2 * xk @ Om @ xk
            rho[t] = r
            if periodic:
                r = 0.0
            eta[t] = eta_c
            eta_c = (1.0 - lam) * eta_c + r
        else:
            eta[t] = eta[t - 1]
        xk_hist[t] = xk
        x[t + 1] = A @ xt + BK @ xk
    return x, xk_hist, sampled, transmitted, eta, rho, cond


def sts_scan(A, BK, Omega, xk, sigma1, sigma2, s_bar):
    """Waiting-condition values for horizons ``1..s_bar``."""
    xk = np.asarray(xk, dtype=float)
    u = BK @ xk
    x = xk.copy()
    base = sigma2 * xk @ Omega @ xk
    out = np.empty(s_bar)
    for s in range(s_bar):
        x = A @ x + u
        e = x - xk
        out[s] = sigma1 * x @ Omega @ x + base - e @ Omega @ e
    return out


def dlf_segment(xseg, S, R1, R2):
    """Looped-functional values at every ``t`` of one inter-sample segment.

    ``xseg`` holds ``x(tau) .. x(tau')`` (``h + 1`` rows).
    """
    xseg = np.asarray(xseg, dtype=float)
    h = xseg.shape[0] - 1
    y = np.diff(xseg, axis=0)
    qy1 = np.einsum("ij,jk,ik->i", y, R1, y)
    qy2 = np.einsum("ij,jk,ik->i", y, R2, y)
    phi0 = np.concatenate([xseg[0], xseg[h]])
    csum = np.cumsum(xseg, axis=0)
    total = csum[h]
    out = np.empty(h + 1)
    for d in range(h + 1):
        xt = xseg[d]
        phi1 = np.concatenate([d * phi0, xt - xseg[0], csum[d] - xseg[0]])
        tail = total - (csum[d - 1] if d > 0 else 0.0)
        phi2 = np.concatenate([(h - d) * phi0, xseg[h] - xt, tail - xseg[h]])
        v1 = 2.0 * phi1 @ S @ phi2
        v2 = (h - d) * qy1[:d].sum()
        v3 = -d * qy2[d:].sum()
        out[d] = v1 + v2 + v3
    return out
