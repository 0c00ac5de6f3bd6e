"""Diagonal state-space recurrence with zero-order-hold discretisation,
and the gated sequence block built around it.

For a diagonal entry ``a`` and step ``delta`` the hold gives::

    abar = exp(delta*a)
    bbar = delta * phi(delta*a) * b,   phi(x) = expm1(x)/x  (1 + x/2 near 0)

which equals ``(exp(delta*a) - 1)/a * b`` without the cancellation at small
``delta*a``.
"""

from __future__ import annotations

import math

import numpy as np

from . import kernels
from . import tensor as T
from .errors import ContractError, ShapeError
from .nn import BatchNorm, Linear, Module, kaiming_uniform
from .tensor import Param, get_default_dtype

SERIES_CUTOFF = 1e-6
# projections inside the block are not followed by relu; use the plain
# +-1/sqrt(fan_in) bound
LINEAR_SLOPE = math.sqrt(5.0)


def phi(x):
    x = np.asarray(x, dtype=np.float64)
    small = np.abs(x) < SERIES_CUTOFF
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 + 0.5 * x, np.expm1(x) / safe)


def discretize(delta, a, b):
    """Return ``(abar, bbar)`` for step ``delta > 0``, diagonal ``a`` and input weight ``b``."""
    delta = np.asarray(delta, dtype=np.float64)
    if np.any(delta <= 0):
        raise ContractError("delta must be positive")
    x = delta * np.asarray(a, dtype=np.float64)
    abar = np.exp(x)
    bbar = delta * phi(x) * np.asarray(b, dtype=np.float64)
    if abar.ndim == 0:
        return float(abar), float(bbar)
    return abar, bbar


def _check_scan_shapes(u, delta, A, Bm, Cm, D):
    if u.ndim != 3:
        raise ShapeError(f"scan input must be [batch, time, channels], got {u.shape}")
    nb, L, C = u.shape
    S = A.shape[1]
    if delta.shape != u.shape:
        raise ShapeError(f"delta shape {delta.shape} != input shape {u.shape}")
    if A.shape != (C, S) or D.shape != (C,):
        raise ShapeError(f"A {A.shape} / D {D.shape} do not match {C} channels")
    if Bm.shape != (nb, L, S) or Cm.shape != (nb, L, S):
        raise ShapeError(f"B {Bm.shape} / C {Cm.shape} must be {(nb, L, S)}")


def selective_scan(u, delta, A, Bm, Cm, D):
    """Run ``h_t = abar_t*h_{t-1} + bbar_t*u_t``, ``y_t = <C_t, h_t> + D*u_t`` from ``h_0 = 0``.

    Shapes: ``u``, ``delta`` [batch, time, C]; ``A`` [C, S]; ``Bm``, ``Cm``
    [batch, time, S]; ``D`` [C]. Differentiable in every argument.
    """
    args = [T.as_tensor(v) for v in (u, delta, A, Bm, Cm, D)]
    u, delta, A, Bm, Cm, D = args
    _check_scan_shapes(u.data, delta.data, A.data, Bm.data, Cm.data, D.data)
    if np.any(delta.data <= 0):
        raise ContractError("scan step sizes must be positive")
    dtype = u.dtype
    cast = [np.ascontiguousarray(t.data, dtype=dtype) for t in args]
    x = cast[1][..., None] * cast[2]
    em1 = np.expm1(x)
    y, hs = kernels.scan_forward(cast[0], cast[1], cast[3], cast[4], cast[5], x, em1)

    def bwd(g):
        grads = kernels.scan_backward(np.ascontiguousarray(g, dtype=dtype), cast[0], cast[1],
                                      cast[2], cast[3], cast[4], cast[5], x, em1, hs)
        return grads

    return T.node(y, tuple(args), bwd)


def scan_reference(u, delta, A, Bm, Cm, D):
    """Plain per-step loop over one sequence; float64 oracle for tests."""
    u = np.asarray(u, np.float64)
    L, C = u.shape
    S = A.shape[1]
    h = np.zeros((C, S))
    y = np.zeros((L, C))
    for t in range(L):
        for c in range(C):
            for s in range(S):
                abar, bbar = discretize(delta[t, c], A[c, s], Bm[t, s])
                h[c, s] = abar * h[c, s] + bbar * u[t, c]
                y[t, c] += Cm[t, s] * h[c, s]
            y[t, c] += D[c] * u[t, c]
    return y


def scan_chunked(u, delta, A, Bm, Cm, D, chunk=16):
    """Forward-only chunked evaluation of :func:`selective_scan`.

    Inside a chunk the state is written in closed form with the cumulative
    log-decay ``X_t = sum x_s``: ``h_t = exp(X_t) h_0 + sum_{s<=t} exp(X_t - X_s) bbar_s u_s``.
    Only ``exp`` of non-positive differences appears, so nothing overflows.
    """
    u = np.asarray(u, np.float64)
    delta = np.asarray(delta, np.float64)
    A = np.asarray(A, np.float64)
    Bm = np.asarray(Bm, np.float64)
    Cm = np.asarray(Cm, np.float64)
    _check_scan_shapes(u, delta, A, Bm, Cm, np.asarray(D))
    nb, L, C = u.shape
    x = delta[..., None] * A  # b, t, c, s
    bu = delta[..., None] * phi(x) * Bm[:, :, None, :] * u[..., None]
    h0 = np.zeros((nb, C, A.shape[1]))
    y = np.empty((nb, L, C))
    for lo in range(0, L, chunk):
        hi = min(lo + chunk, L)
        X = np.cumsum(x[:, lo:hi], axis=1)  # b, l, c, s
        diff = X[:, :, None] - X[:, None, :]  # b, t, s_, c, s
        n = hi - lo
        mask = np.tril(np.ones((n, n), dtype=bool))[None, :, :, None, None]
        w = np.where(mask, np.exp(np.where(mask, diff, 0.0)), 0.0)
        h = np.einsum("btrcs,brcs->btcs", w, bu[:, lo:hi]) + np.exp(X) * h0[:, None]
        y[:, lo:hi] = np.einsum("btcs,bts->btc", h, Cm[:, lo:hi])
        h0 = h[:, -1]
    return y + u * np.asarray(D, np.float64)


def inverse_softplus(y):
    return y + np.log(-np.expm1(-y))


class MambaBlock(Module):
    """Gated selective-scan block with a residual connection.

    ``x`` is batch normalised first (the scan output grows with the cube of
    its input scale, so stacked blocks drift without it), then
    ``in_proj -> (value, gate)``; the value path runs a causal depthwise
    convolution, silu, and the scan whose ``delta``, ``B``, ``C`` are
    projected from it; the result is multiplied by ``silu(gate)``, projected
    back to ``dim`` and added to ``x``.
    """

    def __init__(self, dim, rng, state=16, expand=2, conv_width=4, dt_rank=None,
                 dt_min=1e-3, dt_max=1e-1):
        super().__init__()
        dtype = get_default_dtype()
        di = expand * dim
        r = dt_rank or math.ceil(dim / 16)
        self.dim, self.inner, self.state, self.rank = dim, di, state, r
        self.norm = BatchNorm(dim)
        self.in_proj = Param(kaiming_uniform(rng, dim, (dim, 2 * di), LINEAR_SLOPE))
        self.conv_w = Param(rng.uniform(-1, 1, size=(di, conv_width)).astype(dtype)
                            / np.sqrt(conv_width).astype(dtype))
        self.conv_b = Param(np.zeros(di, dtype=dtype))
        self.x_proj = Param(kaiming_uniform(rng, di, (di, r + 2 * state), LINEAR_SLOPE))
        self.dt_proj = Linear(r, di, rng)
        self.dt_proj.weight.data[...] = rng.uniform(-r ** -0.5, r ** -0.5, size=(r, di))
        dt = np.exp(rng.uniform(math.log(dt_min), math.log(dt_max), size=di))
        self.dt_proj.bias.data[...] = inverse_softplus(dt)
        self.A_log = Param(np.log(np.tile(np.arange(1, state + 1, dtype=np.float64), (di, 1))).astype(dtype))
        self.D = Param(np.ones(di, dtype=dtype))
        self.out_proj = Param(kaiming_uniform(rng, di, (di, dim), LINEAR_SLOPE))

    def __call__(self, x):
        di, r, S = self.inner, self.rank, self.state
        xn = self.norm(x)
        v = T.linear(xn, self.in_proj[:, :di])
        z = T.linear(xn, self.in_proj[:, di:])
        v = T.silu(T.conv1d_causal(v, self.conv_w, self.conv_b))
        dt = T.linear(v, self.x_proj[:, :r])
        Bm = T.linear(v, self.x_proj[:, r:r + S])
        Cm = T.linear(v, self.x_proj[:, r + S:])
        delta = T.softplus(self.dt_proj(dt))
        # softplus underflows to exactly 0 below about -104 in float32; adding the
        # smallest normal keeps the step positive and changes nothing else
        delta = T.add(delta, np.finfo(delta.dtype).tiny)
        A = T.neg(T.exp(self.A_log))
        y = selective_scan(v, delta, A, Bm, Cm, self.D)
        y = T.mul(y, T.silu(z))
        return T.add(T.linear(y, self.out_proj), x)
