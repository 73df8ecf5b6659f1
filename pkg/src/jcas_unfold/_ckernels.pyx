# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Same signatures and semantics as ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, cos, sin, INFINITY

cnp.import_array()

BACKEND = "cython"


cdef inline void _project(double[::1] x, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef double re, im, mod
    for i in range(n):
        re = x[i]
        im = x[i + n]
        mod = sqrt(re * re + im * im)
        if mod < 1e-12:
            x[i] = 1.0
            x[i + n] = 0.0
        else:
            x[i] = re / mod
            x[i + n] = im / mod


cdef inline void _matvec(const double[:, ::1] g, const double[::1] x, double[::1] out, Py_ssize_t dim) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(dim):
        acc = 0.0
        for j in range(dim):
            acc = acc + g[i, j] * x[j]
        out[i] = acc


cdef inline double _objective(const double[::1] gx, const double[::1] x, const double[::1] hts,
                              const double[::1] x0, double ss, double rho, double amp,
                              Py_ssize_t dim) noexcept nogil:
    cdef Py_ssize_t i
    cdef double xgx = 0.0, xh = 0.0, dd = 0.0, d
    for i in range(dim):
        xgx = xgx + x[i] * gx[i]
        xh = xh + x[i] * hts[i]
        d = x[i] - x0[i]
        dd = dd + d * d
    return rho * (amp * amp * xgx - 2.0 * amp * xh + ss) + (1.0 - rho) * amp * amp * dd


def pgd(const double[:, :, ::1] gram, const double[:, ::1] hts, const double[:, ::1] x0,
        const double[::1] sbar_sq, double rho, double amp, double delta,
        Py_ssize_t max_iters, double tol, Py_ssize_t patience, x_init):
    cdef Py_ssize_t nb = hts.shape[0], dim = hts.shape[1], n = dim // 2
    cdef Py_ssize_t b, t, i, stop_at
    cdef double a2 = amp * amp, f, fb
    cdef double c1 = 2.0 * rho * a2, c2 = 2.0 * rho * amp, c3 = 2.0 * (1.0 - rho) * a2
    x_np = np.array(x_init, dtype=np.float64, order="C", copy=True)
    best_np = np.empty((nb, dim))
    fbest_np = np.empty(nb)
    iters_np = np.empty(nb, dtype=np.int64)
    trace_np = np.empty((nb, max_iters + 1))
    gx_np = np.empty(dim)
    cdef double[:, ::1] x = x_np
    cdef double[:, ::1] best = best_np
    cdef double[::1] fbest = fbest_np
    cdef long long[::1] iters = iters_np
    cdef double[:, ::1] trace = trace_np
    cdef double[::1] gx = gx_np
    with nogil:
        for b in range(nb):
            _project(x[b], n)
            _matvec(gram[b], x[b], gx, dim)
            fb = _objective(gx, x[b], hts[b], x0[b], sbar_sq[b], rho, amp, dim)
            for i in range(dim):
                best[b, i] = x[b, i]
            trace[b, 0] = fb
            stop_at = max_iters
            for t in range(1, max_iters + 1):
                for i in range(dim):
                    x[b, i] = x[b, i] - delta * (c1 * gx[i] - c2 * hts[b, i] + c3 * (x[b, i] - x0[b, i]))
                _project(x[b], n)
                _matvec(gram[b], x[b], gx, dim)
                f = _objective(gx, x[b], hts[b], x0[b], sbar_sq[b], rho, amp, dim)
                if f < fb:
                    fb = f
                    for i in range(dim):
                        best[b, i] = x[b, i]
                trace[b, t] = fb
                if t >= patience and trace[b, t - patience] - fb < tol:
                    stop_at = t
                    break
            for t in range(stop_at + 1, max_iters + 1):
                trace[b, t] = fb
            fbest[b] = fb
            iters[b] = stop_at
    return best_np, fbest_np, iters_np, trace_np


def psi(t):
    return np.clip(2.0 * np.asarray(t, dtype=np.float64), -1.0, 1.0)


cdef inline double _psi(double t) noexcept nogil:
    t = 2.0 * t
    if t > 1.0:
        return 1.0
    if t < -1.0:
        return -1.0
    return t


def unfold_forward(const double[:, :, ::1] w, const double[:, :, ::1] b,
                   const double[:, :, ::1] gram, const double[:, ::1] hts,
                   const double[:, ::1] x0, x_init):
    cdef Py_ssize_t nl = w.shape[0], nb = hts.shape[0], dim = hts.shape[1]
    cdef Py_ssize_t p, k, i
    cdef double s
    pre_np = np.empty((nl, nb, dim))
    out_np = np.empty((nl + 1, nb, dim))
    q_np = np.empty((nl, nb, dim))
    out_np[0] = x_init
    bsum_np = np.asarray(b).sum(axis=1)
    cdef double[:, :, ::1] pre = pre_np
    cdef double[:, :, ::1] out = out_np
    cdef double[:, :, ::1] q = q_np
    cdef double[:, ::1] bsum = bsum_np
    with nogil:
        for p in range(nl):
            for k in range(nb):
                _matvec(gram[k], out[p, k], q[p, k], dim)
                for i in range(dim):
                    s = (w[p, 0, i] * x0[k, i] + w[p, 1, i] * hts[k, i]
                         + w[p, 2, i] * q[p, k, i] + w[p, 3, i] * out[p, k, i] + bsum[p, i])
                    pre[p, k, i] = s
                    out[p + 1, k, i] = _psi(s)
    return pre_np, out_np, q_np


def unfold_loss_grad(const double[:, :, ::1] w, const double[:, :, ::1] b,
                     const double[:, :, ::1] gram, const double[:, ::1] hts,
                     const double[:, ::1] x0, const double[::1] sbar_sq,
                     double rho, double amp, x_init):
    cdef Py_ssize_t nl = w.shape[0], nb = hts.shape[0], dim = hts.shape[1]
    cdef Py_ssize_t p, k, i, j
    cdef double a2 = amp * amp, inv = 1.0 / nb, loss = 0.0, g, acc
    cdef double c1 = 2.0 * rho * a2, c2 = 2.0 * rho * amp, c3 = 2.0 * (1.0 - rho) * a2
    pre_np, out_np, q_np = unfold_forward(w, b, gram, hts, x0, x_init)
    dw_np = np.zeros((nl, 4, dim))
    db_np = np.zeros((nl, 4, dim))
    carry_np = np.zeros((nb, dim))
    gx_np = np.empty(dim)
    ds_np = np.empty(dim)
    cdef double[:, :, ::1] pre = pre_np
    cdef double[:, :, ::1] out = out_np
    cdef double[:, :, ::1] q = q_np
    cdef double[:, :, ::1] dw = dw_np
    cdef double[:, :, ::1] db = db_np
    cdef double[:, ::1] carry = carry_np
    cdef double[::1] gx = gx_np
    cdef double[::1] ds = ds_np
    with nogil:
        for p in range(nl - 1, -1, -1):
            for k in range(nb):
                if p + 1 < nl:
                    for i in range(dim):
                        gx[i] = q[p + 1, k, i]
                else:
                    _matvec(gram[k], out[p + 1, k], gx, dim)
                loss = loss + _objective(gx, out[p + 1, k], hts[k], x0[k], sbar_sq[k], rho, amp, dim)
                for i in range(dim):
                    g = (c1 * gx[i] - c2 * hts[k, i] + c3 * (out[p + 1, k, i] - x0[k, i])) * inv + carry[k, i]
                    if pre[p, k, i] < 0.5 and pre[p, k, i] > -0.5:
                        ds[i] = 2.0 * g
                    else:
                        ds[i] = 0.0
                    dw[p, 0, i] += ds[i] * x0[k, i]
                    dw[p, 1, i] += ds[i] * hts[k, i]
                    dw[p, 2, i] += ds[i] * q[p, k, i]
                    dw[p, 3, i] += ds[i] * out[p, k, i]
                    db[p, 0, i] += ds[i]
                if p > 0:
                    # gram is symmetric: G' (w3 * ds) == G (w3 * ds)
                    for i in range(dim):
                        acc = w[p, 3, i] * ds[i]
                        for j in range(dim):
                            acc = acc + gram[k, i, j] * w[p, 2, j] * ds[j]
                        carry[k, i] = acc
            for i in range(dim):
                db[p, 1, i] = db[p, 0, i]
                db[p, 2, i] = db[p, 0, i]
                db[p, 3, i] = db[p, 0, i]
    return loss * inv, dw_np, db_np


def phase_grid(const double[:, ::1] gram, const double[::1] hts, const double[::1] x0,
               double sbar_sq, double rho, double amp, Py_ssize_t grid_points):
    cdef Py_ssize_t dim = hts.shape[0], n = dim // 2
    cdef Py_ssize_t i, pos
    cdef double f, best_f = INFINITY
    cdef bint done = False
    idx_np = np.zeros(n, dtype=np.int64)
    best_np = np.zeros(n, dtype=np.int64)
    c_np = np.cos(2.0 * np.pi * np.arange(grid_points) / grid_points)
    s_np = np.sin(2.0 * np.pi * np.arange(grid_points) / grid_points)
    x_np = np.empty(dim)
    gx_np = np.empty(dim)
    cdef long long[::1] idx = idx_np
    cdef long long[::1] best = best_np
    cdef double[::1] cs = c_np
    cdef double[::1] sn = s_np
    cdef double[::1] x = x_np
    cdef double[::1] gx = gx_np
    with nogil:
        while not done:
            for i in range(n):
                x[i] = cs[idx[i]]
                x[i + n] = sn[idx[i]]
            _matvec(gram, x, gx, dim)
            f = _objective(gx, x, hts, x0, sbar_sq, rho, amp, dim)
            if f < best_f:
                best_f = f
                for i in range(n):
                    best[i] = idx[i]
            # odometer: last index fastest, so visiting order is lexicographic
            pos = n - 1
            while pos >= 0:
                idx[pos] += 1
                if idx[pos] < grid_points:
                    break
                idx[pos] = 0
                pos -= 1
            if pos < 0:
                done = True
    return best_np, best_f
