"""Dense tensors with tape-based reverse-mode differentiation.

Operations record themselves on the innermost active :class:`Tape` when at
least one input requires a gradient. Outside a tape nothing is recorded, which
is how inference runs. Arrays are float32 unless :func:`precision` selects
float64 (used for finite-difference checks).
"""

from __future__ import annotations

import builtins
import threading
from contextlib import contextmanager

import numpy as np

from . import kernels
from .errors import ContractError, DegenerateBatchError, ShapeError

_local = threading.local()
_default_dtype = np.dtype(np.float32)


def get_default_dtype():
    return _default_dtype


def set_default_dtype(dtype):
    global _default_dtype
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}")
    _default_dtype = dtype


@contextmanager
def precision(dtype):
    """Temporarily change the dtype used for new tensors and parameters."""
    old = _default_dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(old)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            # float arrays keep their precision; lists and scalars take the default
            kept = isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64)
            dtype = data.dtype if kept else _default_dtype
        self.data = np.ascontiguousarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def __len__(self):
        return self.data.shape[0]

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"{type(self).__name__}(shape={self.shape}, dtype={self.dtype}{tag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class Param(Tensor):
    """A trainable leaf tensor."""

    __slots__ = ()

    def __init__(self, data, name=None, dtype=None):
        super().__init__(data, requires_grad=True, name=name,
                         dtype=dtype or _default_dtype)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager; operations executed inside the block are
    appended in execution order and :meth:`backward` replays them in reverse.
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        stack = getattr(_local, "tapes", None)
        if stack is None:
            stack = _local.tapes = []
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _local.tapes.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, out, inputs, backward_fn):
        self.nodes.append((out, inputs, backward_fn))

    def backward(self, loss, params=()):
        return backward(self, loss, params)


def active_tape():
    stack = getattr(_local, "tapes", None)
    return stack[-1] if stack else None


def node(data, inputs, backward_fn):
    """Wrap ``data`` as the output of an operation on ``inputs``.

    ``backward_fn(g)`` must return one gradient (or None) per input. Nothing
    is recorded when no tape is active or no input needs a gradient.
    """
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(out, inputs, backward_fn)
    return out


def backward(tape, loss, params=()):
    """Propagate d(loss)/d(input) through ``tape``.

    Every leaf tensor requiring a gradient that appears on the tape, plus any
    tensor in ``params``, gets ``.grad`` overwritten; unreachable ones get
    zeros. Replaying the same tape gives identical gradients.
    """
    if loss.size != 1:
        raise ContractError(f"loss must be a scalar, got shape {loss.shape}")
    grads = {id(loss): np.ones_like(loss.data)}
    produced = set()
    leaves = {}
    for out, inputs, fn in reversed(tape.nodes):
        produced.add(id(out))
        g = grads.pop(id(out), None)
        for t in inputs:
            if t.requires_grad and id(t) not in leaves:
                leaves[id(t)] = t
        if g is None:
            continue
        for t, gi in zip(inputs, fn(g)):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    for p in params:
        leaves.setdefault(id(p), p)
    for key, t in leaves.items():
        if key in produced:
            continue
        g = grads.get(key)
        t.grad = np.zeros_like(t.data) if g is None else np.array(g, dtype=t.dtype).reshape(t.shape)
    return loss


# ---------------------------------------------------------------- helpers

def as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else _default_dtype
    return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _binary_operands(a, b):
    if not isinstance(a, Tensor):
        a = as_tensor(a, like=b)
    if not isinstance(b, Tensor):
        b = as_tensor(b, like=a)
    return a, b


# ---------------------------------------------------------------- arithmetic

def add(a, b):
    a, b = _binary_operands(a, b)
    return node(a.data + b.data, (a, b),
                lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = _binary_operands(a, b)
    return node(a.data - b.data, (a, b),
                lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = _binary_operands(a, b)

    def bwd(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return node(a.data * b.data, (a, b), bwd)


def div(a, b):
    a, b = _binary_operands(a, b)
    out = a.data / b.data

    def bwd(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return node(out, (a, b), bwd)


def neg(a):
    return node(-a.data, (a,), lambda g: (-g,))


def square(a):
    return node(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def matmul(a, b):
    """Matrix product; batched over leading axes as in ``numpy.matmul``."""
    a, b = _binary_operands(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands must be at least 2-D")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} x {b.shape}")

    def bwd(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return node(a.data @ b.data, (a, b), bwd)


# ---------------------------------------------------------------- elementwise

def exp(a):
    out = np.exp(a.data)
    return node(out, (a,), lambda g: (g * out,))


def log(a):
    return node(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a):
    out = np.sqrt(a.data)
    return node(out, (a,), lambda g: (0.5 * g / out,))


def relu(a):
    out = np.maximum(a.data, 0)
    return node(out, (a,), lambda g: (g * (out > 0),))


def _sigmoid(x):
    # tanh form is stable for any magnitude
    return 0.5 + 0.5 * np.tanh(0.5 * x)


def sigmoid(a):
    out = _sigmoid(a.data)
    return node(out, (a,), lambda g: (g * out * (1.0 - out),))


def silu(a):
    s = _sigmoid(a.data)
    out = a.data * s
    return node(out, (a,), lambda g: (g * s * (1.0 + a.data * (1.0 - s)),))


def softplus(a):
    out = np.logaddexp(0, a.data).astype(a.dtype, copy=False)
    return node(out, (a,), lambda g: (g * _sigmoid(a.data),))


# ---------------------------------------------------------------- reductions / shape

def sum(a, axis=None, keepdims=False):
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return node(out, (a,), bwd)


def mean(a, axis=None, keepdims=False):
    n = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return mul(sum(a, axis, keepdims), 1.0 / n)


def max(a, axis=-1, keepdims=False):
    """Maximum along one axis; the gradient goes to the first maximal entry."""
    idx = np.expand_dims(np.argmax(a.data, axis=axis), axis)
    out = np.take_along_axis(a.data, idx, axis)
    if not keepdims:
        out = np.squeeze(out, axis)

    def bwd(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        ga = np.zeros_like(a.data)
        np.put_along_axis(ga, idx, g, axis)
        return (ga,)

    return node(out, (a,), bwd)


def reshape(a, shape):
    return node(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes):
    inv = np.argsort(axes)
    return node(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def getitem(a, key):
    def bwd(g):
        ga = np.zeros_like(a.data)
        ga[key] = g
        return (ga,)

    return node(a.data[key], (a,), bwd)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    return node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors),
                lambda g: tuple(np.split(g, cuts, axis=axis)))


def take_rows(a, idx):
    """Gather rows of a 2-D tensor: ``out[...] = a[idx[...]]``."""
    idx = np.asarray(idx, dtype=np.int64)
    if a.ndim != 2:
        raise ShapeError("take_rows expects a 2-D tensor")
    n, d = a.shape

    def bwd(g):
        ga = np.zeros_like(a.data)
        kernels.scatter_add_rows(ga, np.ascontiguousarray(idx.ravel()),
                                 np.ascontiguousarray(g.reshape(-1, d)))
        return (ga,)

    return node(a.data[idx], (a,), bwd)


# ---------------------------------------------------------------- nn ops

def softmax(a, axis=-1):
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)
    return node(out, (a,), lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),))


def log_softmax(a, axis=-1):
    z = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse

    def bwd(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return node(out, (a,), bwd)


def linear(x, W, b=None):
    """``x @ W + b`` over the last axis of ``x``."""
    x = as_tensor(x, like=W)
    if x.shape[-1] != W.shape[0]:
        raise ShapeError(f"linear: input width {x.shape[-1]} != weight rows {W.shape[0]}")
    x2 = x.data.reshape(-1, W.shape[0])
    out = x2 @ W.data
    if b is not None:
        out += b.data
    out = out.reshape(x.shape[:-1] + (W.shape[1],))

    def bwd(g):
        g2 = g.reshape(-1, W.shape[1])
        gx = (g2 @ W.data.T).reshape(x.shape) if x.requires_grad else None
        gW = x2.T @ g2 if W.requires_grad else None
        gb = np.ones(g2.shape[0], g2.dtype) @ g2 if b is not None and b.requires_grad else None
        return (gx, gW, gb) if b is not None else (gx, gW)

    return node(out, (x, W, b) if b is not None else (x, W), bwd)


def batch_norm(x, gamma, beta, running_mean, running_var, training,
               momentum=0.9, eps=1e-5):
    """Normalise the last axis of ``x`` over all leading rows.

    Train mode uses the biased batch variance and updates the running
    buffers in place (``r <- momentum*r + (1-momentum)*batch``; the running
    variance takes the unbiased estimate). Eval mode uses the buffers.
    """
    D = x.shape[-1]
    if gamma.shape != (D,) or beta.shape != (D,):
        raise ShapeError(f"batch_norm: feature width {D} does not match gamma/beta {gamma.shape}")
    x2 = np.ascontiguousarray(x.data.reshape(-1, D))
    M = x2.shape[0]
    if training:
        if M < 2:
            raise DegenerateBatchError("batch_norm in train mode needs at least 2 rows")
        out, xhat, mu, var, inv = kernels.bn_train_forward(
            x2, np.ascontiguousarray(gamma.data, x.dtype), np.ascontiguousarray(beta.data, x.dtype), eps)
        running_mean *= momentum
        running_mean += (1 - momentum) * mu
        running_var *= momentum
        running_var += (1 - momentum) * var * (M / (M - 1))
    else:
        inv = 1.0 / np.sqrt(running_var.astype(np.float64) + eps)
        scale = (gamma.data * inv).astype(x.dtype)
        out = x2 * scale + (beta.data - running_mean * scale).astype(x.dtype)
    out = out.reshape(x.shape)

    def bwd(g):
        g2 = np.ascontiguousarray(g.reshape(-1, D), dtype=x.dtype)
        if training:
            gx, ggamma, gbeta = kernels.bn_train_backward(
                g2, xhat, np.ascontiguousarray(gamma.data, x.dtype), inv, x.requires_grad)
        else:
            xh = (x2 - running_mean) * inv.astype(x.dtype)
            ggamma = np.einsum("ij,ij->j", g2, xh)
            gbeta = g2.sum(axis=0)
            gx = g2 * (gamma.data * inv).astype(x.dtype) if x.requires_grad else None
        if gx is not None:
            gx = gx.reshape(x.shape)
        return gx, ggamma, gbeta

    return node(out, (x, gamma, beta), bwd)


def conv1d_causal(x, w, b=None):
    """Depthwise causal convolution over axis 1 of ``x`` [batch, time, channels].

    ``w[c, k]`` weights the input ``k`` steps in the past (``k = 0`` is the
    current step); earlier positions are zero padded.
    """
    B, L, C = x.shape
    if w.shape[0] != C:
        raise ShapeError(f"conv1d_causal: {C} channels but weight has {w.shape[0]}")
    width = w.shape[1]
    out = x.data * w.data[:, 0]
    for k in range(1, min(width, L)):
        out[:, k:] += x.data[:, :-k] * w.data[:, k]
    if b is not None:
        out += b.data

    def bwd(g):
        gx = gw = gb = None
        if x.requires_grad:
            gx = g * w.data[:, 0]
            for k in range(1, min(width, L)):
                gx[:, :-k] += g[:, k:] * w.data[:, k]
        if w.requires_grad:
            gw = np.zeros_like(w.data)
            gw[:, 0] = np.einsum("blc,blc->c", g, x.data)
            for k in range(1, min(width, L)):
                gw[:, k] = np.einsum("blc,blc->c", g[:, k:], x.data[:, :-k])
        if b is not None and b.requires_grad:
            gb = g.sum(axis=(0, 1))
        return (gx, gw, gb) if b is not None else (gx, gw)

    return node(out, (x, w, b) if b is not None else (x, w), bwd)


def norm(a, axis=-1):
    """Euclidean norm along ``axis``; the subgradient at zero is taken as 0."""
    out = np.sqrt((a.data * a.data).sum(axis=axis))

    def bwd(g):
        safe = np.where(out > 0, out, 1.0)
        scale = np.where(out > 0, g / safe, 0.0)
        return (np.expand_dims(scale, axis) * a.data,)

    return node(out, (a,), bwd)


# ---------------------------------------------------------------- checking

def gradcheck(fn, inputs, h=1e-5, floor=1e-4):
    """Largest relative error between tape gradients and central differences.

    ``fn(*inputs)`` must return a scalar tensor. The error for each input is
    ``||analytic - numeric|| / max(||analytic||, ||numeric||, floor)`` and the
    maximum over inputs is returned. The floor keeps inputs whose true
    gradient is exactly zero (a bias feeding batch norm) from dividing
    rounding noise by itself. Run under ``precision(np.float64)``.
    """
    with Tape() as tape:
        loss = fn(*inputs)
    backward(tape, loss, inputs)
    worst = 0.0
    for t in inputs:
        analytic = t.grad.copy()
        numeric = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = fn(*inputs).item()
            flat[i] = orig - h
            fm = fn(*inputs).item()
            flat[i] = orig
            nflat[i] = (fp - fm) / (2 * h)
        denom = builtins.max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
        worst = builtins.max(worst, float(np.linalg.norm(analytic - numeric) / denom))
    return worst
