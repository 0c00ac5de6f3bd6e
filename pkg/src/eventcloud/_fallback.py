"""Pure numpy versions of the compiled kernels, same signatures and results."""

import numpy as np

NAME = "numpy"


def fps(coords, n):
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    T = coords.shape[0]
    picks = np.empty(n, dtype=np.int64)
    mind = np.full(T, np.inf)
    best = 0
    picked = np.zeros(T, dtype=bool)
    for k in range(n):
        picks[k] = best
        picked[best] = True
        d = coords - coords[best]
        d = d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2]
        np.minimum(mind, d, out=mind)
        best = int(np.argmax(np.where(picked, -1.0, mind)))
    return picks


def _phi(x, em1):
    small = np.abs(x) < 1e-6
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 + 0.5 * x, em1 / safe).astype(x.dtype, copy=False)


def _dphi(x, em1):
    small = np.abs(x) < 1e-4
    safe = np.where(small, 1.0, x)
    exact = (em1 + 1.0 - em1 / safe) / safe
    return np.where(small, 0.5 + x / 3.0 + x * x / 8.0, exact).astype(x.dtype, copy=False)


def scan_forward(u, delta, Bm, Cm, D, x, em1):
    nb, L, C = u.shape
    dA = em1 + 1.0
    bx = delta[..., None] * _phi(x, em1) * Bm[:, :, None, :] * u[..., None]
    hs = np.empty_like(bx)
    h = np.zeros_like(bx[:, 0])
    for t in range(L):
        h = dA[:, t] * h + bx[:, t]
        hs[:, t] = h
    y = np.matmul(hs, Cm[..., None])[..., 0] + u * D
    return y, hs


def scan_backward(dy, u, delta, A, Bm, Cm, D, x, em1, hs):
    nb, L, C = u.shape
    dA = em1 + 1.0
    g = delta[..., None] * _phi(x, em1)
    dyC = dy[..., None] * Cm[:, :, None, :]
    dh = np.empty_like(dyC)
    carry = np.zeros_like(dyC[:, 0])
    for t in range(L - 1, -1, -1):
        carry = dyC[:, t] + carry
        dh[:, t] = carry
        carry = dA[:, t] * carry
    hprev = np.concatenate([np.zeros_like(hs[:, :1]), hs[:, :-1]], axis=1)
    d_da = dh * hprev
    d_g = dh * Bm[:, :, None, :] * u[..., None]
    dCm = np.matmul(dy[:, :, None, :], hs)[:, :, 0, :]
    dBm = (dh * g * u[..., None]).sum(axis=2)
    du = (dh * g * Bm[:, :, None, :]).sum(axis=-1) + dy * D
    ddelta = ((d_da * A + d_g) * dA).sum(axis=-1)
    dt = delta[..., None]
    dAm = (d_da * dt * dA + d_g * dt * dt * _dphi(x, em1)).sum(axis=(0, 1))
    dD = (dy * u).sum(axis=(0, 1))
    dtype = u.dtype
    return tuple(a.astype(dtype, copy=False) for a in (du, ddelta, dAm, dBm, dCm, dD))


def scatter_add_rows(out, idx, g):
    np.add.at(out, idx, g)
    return out


def denoise_mask(t, x, y, radius, dt, min_neighbors):
    t = np.asarray(t, dtype=np.int64)
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    n = t.shape[0]
    if n == 0:
        return np.zeros(0, dtype=bool)
    idx = np.arange(n)
    lo = np.searchsorted(t, t - dt, side="left")
    hi = np.searchsorted(t, t + dt, side="right")
    count = np.zeros(n, dtype=np.int64)
    for k in range(1, int(max((hi - idx).max(), (idx - lo + 1).max()))):
        for j, valid in ((idx + k, idx + k < hi), (idx - k, idx - k >= lo)):
            jj = np.clip(j, 0, n - 1)
            near = (np.abs(x[jj] - x) <= radius) & (np.abs(y[jj] - y) <= radius)
            count += valid & near
    return count >= min_neighbors


def bn_train_forward(x, gamma, beta, eps):
    M = x.shape[0]
    x64 = x.astype(np.float64)
    mu = x64.sum(axis=0) / M
    xc = x64 - mu
    var = np.einsum("ij,ij->j", xc, xc) / M
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xc * inv).astype(x.dtype)
    return xhat * gamma + beta, xhat, mu, var, inv


def bn_train_backward(g, xhat, gamma, inv, need_gx):
    M = g.shape[0]
    g64 = g.astype(np.float64)
    sg = g64.sum(axis=0)
    sgx = np.einsum("ij,ij->j", g64, xhat)
    gx = None
    if need_gx:
        gx = ((g64 - sg / M - xhat * (sgx / M)) * (gamma * inv)).astype(g.dtype)
    return gx, sgx.astype(g.dtype), sg.astype(g.dtype)
