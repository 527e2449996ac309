# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the loops in ``_kernels_py``; same signatures and results."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef double _quad(const double[:, ::1] M, const double[:] a, const double[:] b, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double acc = 0.0, row
    for i in range(n):
        row = 0.0
        for j in range(n):
            row += M[i, j] * b[j]
        acc += a[i] * row
    return acc


def ets_loop(A, B, K, Omega, x0, Py_ssize_t horizon, Py_ssize_t h, double sigma1, double sigma2,
             double lam, double theta, double eta0, bint periodic):
    cdef double[:, ::1] Av = np.ascontiguousarray(A, dtype=float)
    cdef double[:, ::1] BKv = np.ascontiguousarray(np.asarray(B) @ np.asarray(K), dtype=float)
    cdef double[:, ::1] Om = np.ascontiguousarray(Omega, dtype=float)
    cdef Py_ssize_t n = Av.shape[0]
    x_arr = np.empty((horizon + 1, n))
    xk_arr = np.empty((horizon, n))
    sampled_arr = np.zeros(horizon, dtype=np.int8)
    trans_arr = np.zeros(horizon, dtype=np.int8)
    eta_arr = np.empty(horizon)
    rho_arr = np.full(horizon, np.nan)
    cond_arr = np.full(horizon, np.nan)
    cdef double[:, ::1] x = x_arr
    cdef double[:, ::1] xkh = xk_arr
    cdef signed char[:] sampled = sampled_arr
    cdef signed char[:] trans = trans_arr
    cdef double[:] eta = eta_arr
    cdef double[:] rho = rho_arr
    cdef double[:] cond = cond_arr
    cdef double[:] xk = np.array(x0, dtype=float)
    cdef double[:] e = np.empty(n)
    cdef Py_ssize_t t, i, j
    cdef double r, c, acc
    cdef double eta_c = 0.0 if periodic else eta0
    for i in range(n):
        x[0, i] = xk[i]
    for t in range(horizon):
        if t % h == 0:
            sampled[t] = 1
            if t == 0 or periodic:
                for i in range(n):
                    xk[i] = x[t, i]
                trans[t] = 1
                r = (sigma1 + sigma2) * _quad(Om, xk, xk, n)
            else:
                for i in range(n):
                    e[i] = x[t, i] - xk[i]
                r = sigma1 * _quad(Om, x[t], x[t], n) + sigma2 * _quad(Om, xk, xk, n) - _quad(Om, e, e, n)
                c = eta_c + theta * r
                cond[t] = c
                if c < 0:
                    for i in range(n):
                        xk[i] = x[t, i]
                    trans[t] = 1
                    r = (sigma1 + sigma2) * _quad(Om, xk, xk, n)
            rho[t] = r
            if periodic:
                r = 0.0
            eta[t] = eta_c
            eta_c = (1.0 - lam) * eta_c + r
        else:
            eta[t] = eta[t - 1]
        for i in range(n):
            xkh[t, i] = xk[i]
            acc = 0.0
            for j in range(n):
                acc += Av[i, j] * x[t, j] + BKv[i, j] * xk[j]
            x[t + 1, i] = acc
    return x_arr, xk_arr, sampled_arr, trans_arr, eta_arr, rho_arr, cond_arr


def sts_scan(A, BK, Omega, xk_in, double sigma1, double sigma2, Py_ssize_t s_bar):
    cdef double[:, ::1] Av = np.ascontiguousarray(A, dtype=float)
    cdef double[:, ::1] Om = np.ascontiguousarray(Omega, dtype=float)
    cdef double[:] xk = np.ascontiguousarray(xk_in, dtype=float)
    cdef Py_ssize_t n = Av.shape[0]
    cdef double[:] u = np.ascontiguousarray(np.asarray(BK) @ np.asarray(xk_in, dtype=float))
    cdef double[:] x = np.array(xk_in, dtype=float)
    cdef double[:] xn = np.empty(n)
    cdef double[:] e = np.empty(n)
    out_arr = np.empty(s_bar)
    cdef double[:] out = out_arr
    cdef double base = sigma2 * _quad(Om, xk, xk, n)
    cdef double acc
    cdef Py_ssize_t s, i, j
    for s in range(s_bar):
        for i in range(n):
            acc = u[i]
            for j in range(n):
                acc += Av[i, j] * x[j]
            xn[i] = acc
        for i in range(n):
            x[i] = xn[i]
            e[i] = x[i] - xk[i]
        out[s] = sigma1 * _quad(Om, x, x, n) + base - _quad(Om, e, e, n)
    return out_arr


def dlf_segment(xseg_in, S_in, R1_in, R2_in):
    cdef double[:, ::1] xs = np.ascontiguousarray(xseg_in, dtype=float)
    cdef double[:, ::1] S = np.ascontiguousarray(S_in, dtype=float)
    cdef double[:, ::1] R1 = np.ascontiguousarray(R1_in, dtype=float)
    cdef double[:, ::1] R2 = np.ascontiguousarray(R2_in, dtype=float)
    cdef Py_ssize_t h = xs.shape[0] - 1, n = xs.shape[1], N4 = 4 * n
    cdef Py_ssize_t d, i, j
    cdef double[:] q1 = np.zeros(h + 1)      # prefix sums of y'R1y
    cdef double[:] q2 = np.zeros(h + 1)
    cdef double[:, ::1] cs = np.zeros((h + 2, n))   # cs[d] = sum_{i<d} x(i)
    cdef double[:] y = np.empty(n)
    cdef double[:] p1 = np.empty(N4)
    cdef double[:] p2 = np.empty(N4)
    out_arr = np.empty(h + 1)
    cdef double[:] out = out_arr
    cdef double acc, row
    for d in range(h + 1):
        for i in range(n):
            cs[d + 1, i] = cs[d, i] + xs[d, i]
    for d in range(h):
        for i in range(n):
            y[i] = xs[d + 1, i] - xs[d, i]
        q1[d + 1] = q1[d] + _quad(R1, y, y, n)
        q2[d + 1] = q2[d] + _quad(R2, y, y, n)
    for d in range(h + 1):
        for i in range(n):
            p1[i] = d * xs[0, i]
            p1[n + i] = d * xs[h, i]
            p1[2 * n + i] = xs[d, i] - xs[0, i]
            p1[3 * n + i] = cs[d + 1, i] - xs[0, i]
            p2[i] = (h - d) * xs[0, i]
            p2[n + i] = (h - d) * xs[h, i]
            p2[2 * n + i] = xs[h, i] - xs[d, i]
            p2[3 * n + i] = cs[h + 1, i] - cs[d, i] - xs[h, i]
        acc = 0.0
        for i in range(N4):
            row = 0.0
            for j in range(N4):
                row += S[i, j] * p2[j]
            acc += p1[i] * row
        out[d] = 2.0 * acc + (h - d) * q1[d] - d * (q2[h] - q2[d])
    return out_arr
