# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. ``eventcloud._fallback`` holds the numpy equivalents."""

import numpy as np
cimport numpy as cnp
from cython cimport floating
from libc.math cimport fabs, sqrt

cnp.import_array()

NAME = "cython"


def fps(double[:, ::1] coords, Py_ssize_t n):
    cdef Py_ssize_t T = coords.shape[0]
    cdef Py_ssize_t i, k, best, nxt
    cdef double dx, dy, dz, d, bestd
    out = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] picks = out
    if n == 0:
        return out
    mind_arr = np.full(T, np.inf)
    cdef double[::1] mind = mind_arr
    best = 0
    for k in range(n):
        picks[k] = best
        mind[best] = -1.0  # picked rows never win again
        bestd = -1.0
        nxt = 0
        for i in range(T):
            if mind[i] < 0:
                continue
            dx = coords[i, 0] - coords[best, 0]
            dy = coords[i, 1] - coords[best, 1]
            dz = coords[i, 2] - coords[best, 2]
            d = dx * dx + dy * dy + dz * dz
            if d < mind[i]:
                mind[i] = d
            if mind[i] > bestd:
                bestd = mind[i]
                nxt = i
        best = nxt
    return out


cdef inline double _phi(double x, double em1) nogil:
    # expm1(x) / x with the series limit near 0
    if fabs(x) < 1e-6:
        return 1.0 + 0.5 * x
    return em1 / x


cdef inline double _dphi(double x, double em1) nogil:
    # d/dx of expm1(x)/x, i.e. (exp(x) - expm1(x)/x) / x
    if fabs(x) < 1e-4:
        return 0.5 + x / 3.0 + x * x / 8.0
    return (em1 + 1.0 - em1 / x) / x


def scan_forward(floating[:, :, ::1] u, floating[:, :, ::1] delta,
                 floating[:, :, ::1] Bm, floating[:, :, ::1] Cm, floating[::1] D,
                 floating[:, :, :, ::1] x, floating[:, :, :, ::1] em1):
    """Zero-order-hold recurrence; ``x = delta*A`` and ``em1 = expm1(x)`` come precomputed."""
    cdef Py_ssize_t nb = u.shape[0], L = u.shape[1], C = u.shape[2], S = x.shape[3]
    cdef Py_ssize_t b, t, c, s
    cdef double dt, uu, acc, hv, xv, ev
    dtype = np.float32 if floating is float else np.float64
    y_arr = np.empty((nb, L, C), dtype=dtype)
    hs_arr = np.empty((nb, L, C, S), dtype=dtype)
    cdef floating[:, :, ::1] y = y_arr
    cdef floating[:, :, :, ::1] hs = hs_arr
    cdef double[:, ::1] h = np.zeros((C, S))
    with nogil:
        for b in range(nb):
            h[:, :] = 0.0
            for t in range(L):
                for c in range(C):
                    dt = delta[b, t, c]
                    uu = u[b, t, c]
                    acc = D[c] * uu
                    for s in range(S):
                        xv = x[b, t, c, s]
                        ev = em1[b, t, c, s]
                        hv = (ev + 1.0) * h[c, s] + dt * _phi(xv, ev) * Bm[b, t, s] * uu
                        h[c, s] = hv
                        hs[b, t, c, s] = <floating>hv
                        acc = acc + Cm[b, t, s] * hv
                    y[b, t, c] = <floating>acc
    return y_arr, hs_arr


def scan_backward(floating[:, :, ::1] dy, floating[:, :, ::1] u,
                  floating[:, :, ::1] delta, floating[:, ::1] A,
                  floating[:, :, ::1] Bm, floating[:, :, ::1] Cm, floating[::1] D,
                  floating[:, :, :, ::1] x, floating[:, :, :, ::1] em1,
                  floating[:, :, :, ::1] hs):
    """Adjoint of :func:`scan_forward`: one reverse pass over time."""
    cdef Py_ssize_t nb = u.shape[0], L = u.shape[1], C = u.shape[2], S = A.shape[1]
    cdef Py_ssize_t b, t, c, s
    cdef double a, dt, xv, ev, da, g, dh, hprev, uu, bb, d_da, d_g, dyv, acc_u, acc_d
    dtype = np.float32 if floating is float else np.float64
    du_arr = np.empty((nb, L, C), dtype=dtype)
    dd_arr = np.empty((nb, L, C), dtype=dtype)
    dB_arr = np.zeros((nb, L, S), dtype=dtype)
    dC_arr = np.zeros((nb, L, S), dtype=dtype)
    dA_acc = np.zeros((C, S))
    dD_acc = np.zeros(C)
    cdef floating[:, :, ::1] du = du_arr
    cdef floating[:, :, ::1] ddelta = dd_arr
    cdef floating[:, :, ::1] dB = dB_arr
    cdef floating[:, :, ::1] dC = dC_arr
    cdef double[:, ::1] dA = dA_acc
    cdef double[::1] dD = dD_acc
    cdef double[:, ::1] carry = np.zeros((C, S))
    with nogil:
        for b in range(nb):
            carry[:, :] = 0.0
            for t in range(L - 1, -1, -1):
                for c in range(C):
                    dt = delta[b, t, c]
                    uu = u[b, t, c]
                    dyv = dy[b, t, c]
                    acc_u = dyv * D[c]
                    acc_d = 0.0
                    dD[c] += dyv * uu
                    for s in range(S):
                        a = A[c, s]
                        xv = x[b, t, c, s]
                        ev = em1[b, t, c, s]
                        da = ev + 1.0
                        g = dt * _phi(xv, ev)
                        bb = Bm[b, t, s]
                        dh = dyv * Cm[b, t, s] + carry[c, s]
                        hprev = hs[b, t - 1, c, s] if t > 0 else 0.0
                        dC[b, t, s] += dyv * hs[b, t, c, s]
                        d_da = dh * hprev
                        d_g = dh * bb * uu
                        dB[b, t, s] += dh * g * uu
                        acc_u = acc_u + dh * g * bb
                        acc_d = acc_d + (d_da * a + d_g) * da
                        dA[c, s] += d_da * dt * da + d_g * dt * dt * _dphi(xv, ev)
                        carry[c, s] = da * dh
                    du[b, t, c] = <floating>acc_u
                    ddelta[b, t, c] = <floating>acc_d
    return (du_arr, dd_arr, dA_acc.astype(dtype), dB_arr, dC_arr, dD_acc.astype(dtype))


def scatter_add_rows(floating[:, ::1] out, cnp.int64_t[::1] idx, floating[:, ::1] g):
    cdef Py_ssize_t m = idx.shape[0], D = g.shape[1], i, j, r
    with nogil:
        for i in range(m):
            r = idx[i]
            for j in range(D):
                out[r, j] += g[i, j]
    return out


def denoise_mask(cnp.int64_t[::1] t, cnp.int64_t[::1] x, cnp.int64_t[::1] y,
                 cnp.int64_t radius, cnp.int64_t dt, Py_ssize_t min_neighbors):
    cdef Py_ssize_t n = t.shape[0], i, j, count
    out = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] keep = out
    with nogil:
        for i in range(n):
            count = 0
            j = i - 1
            while j >= 0 and t[i] - t[j] <= dt and count < min_neighbors:
                if x[j] - x[i] <= radius and x[i] - x[j] <= radius and \
                        y[j] - y[i] <= radius and y[i] - y[j] <= radius:
                    count += 1
                j -= 1
            j = i + 1
            while j < n and t[j] - t[i] <= dt and count < min_neighbors:
                if x[j] - x[i] <= radius and x[i] - x[j] <= radius and \
                        y[j] - y[i] <= radius and y[i] - y[j] <= radius:
                    count += 1
                j += 1
            keep[i] = count >= min_neighbors
    return out.view(bool)


def bn_train_forward(floating[:, ::1] x, floating[::1] gamma, floating[::1] beta, double eps):
    """Batch statistics (double accumulation) and the normalised output in two passes."""
    cdef Py_ssize_t M = x.shape[0], D = x.shape[1], i, j
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((M, D), dtype=dtype)
    xhat_arr = np.empty((M, D), dtype=dtype)
    mean_arr = np.zeros(D)
    var_arr = np.zeros(D)
    inv_arr = np.empty(D)
    cdef floating[:, ::1] out = out_arr
    cdef floating[:, ::1] xhat = xhat_arr
    cdef double[::1] mu = mean_arr
    cdef double[::1] var = var_arr
    cdef double[::1] inv = inv_arr
    cdef double v
    with nogil:
        for i in range(M):
            for j in range(D):
                mu[j] += x[i, j]
        for j in range(D):
            mu[j] /= M
        for i in range(M):
            for j in range(D):
                v = x[i, j] - mu[j]
                var[j] += v * v
        for j in range(D):
            var[j] /= M
            inv[j] = 1.0 / sqrt(var[j] + eps)
        for i in range(M):
            for j in range(D):
                v = (x[i, j] - mu[j]) * inv[j]
                xhat[i, j] = <floating>v
                out[i, j] = <floating>(<floating>v * gamma[j] + beta[j])
    return out_arr, xhat_arr, mean_arr, var_arr, inv_arr


def bn_train_backward(floating[:, ::1] g, floating[:, ::1] xhat, floating[::1] gamma,
                      double[::1] inv, bint need_gx):
    """Returns ``(gx, sum(g*xhat), sum(g))``; ``gx`` is None unless requested."""
    cdef Py_ssize_t M = g.shape[0], D = g.shape[1], i, j
    dtype = np.float32 if floating is float else np.float64
    sg_arr = np.zeros(D)
    sgx_arr = np.zeros(D)
    cdef double[::1] sg = sg_arr
    cdef double[::1] sgx = sgx_arr
    with nogil:
        for i in range(M):
            for j in range(D):
                sg[j] += g[i, j]
                sgx[j] += g[i, j] * xhat[i, j]
    if not need_gx:
        return None, sgx_arr.astype(dtype), sg_arr.astype(dtype)
    gx_arr = np.empty((M, D), dtype=dtype)
    cdef floating[:, ::1] gx = gx_arr
    scale_arr = np.empty(D)
    cdef double[::1] scale = scale_arr
    cdef double[::1] a = np.empty(D)
    cdef double[::1] c = np.empty(D)
    with nogil:
        for j in range(D):
            scale[j] = gamma[j] * inv[j]
            a[j] = sg[j] / M
            c[j] = sgx[j] / M
        for i in range(M):
            for j in range(D):
                gx[i, j] = <floating>((g[i, j] - a[j] - xhat[i, j] * c[j]) * scale[j])
    return gx_arr, sgx_arr.astype(dtype), sg_arr.astype(dtype)
