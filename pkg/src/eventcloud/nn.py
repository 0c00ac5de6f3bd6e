"""Parameter containers: a small module tree, linear and batch-norm layers."""

import math

import numpy as np

from . import tensor as T
from .tensor import Param, get_default_dtype


class Module:
    """Holds Params, buffers and child modules in registration order."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Param):
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name, array):
        self._buffers[name] = array
        object.__setattr__(self, name, array)

    def add(self, name, module):
        setattr(self, name, module)
        return module

    def named_params(self, prefix=""):
        for name, p in self._params.items():
            yield prefix + name, p
        for name, child in self._children.items():
            yield from child.named_params(prefix + name + ".")

    def named_buffers(self, prefix=""):
        for name, b in self._buffers.items():
            yield prefix + name, b
        for name, child in self._children.items():
            yield from child.named_buffers(prefix + name + ".")

    def params(self):
        return [p for _, p in self.named_params()]

    def modules(self):
        yield self
        for child in self._children.values():
            yield from child.modules()

    def state_arrays(self):
        """Every named array that defines the model (params, then buffers)."""
        out = {name: p.data for name, p in self.named_params()}
        out.update(self.named_buffers())
        return out

    def train(self, mode=True):
        object.__setattr__(self, "training", mode)
        for child in self._children.values():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)


def kaiming_uniform(rng, fan_in, shape, a=0.0):
    """Uniform fan-in init; ``a`` is the leaky-relu slope of the gain
    (0 for relu layers, sqrt(5) gives the +-1/sqrt(fan_in) linear default)."""
    bound = math.sqrt(6.0 / ((1.0 + a * a) * fan_in))
    return rng.uniform(-bound, bound, size=shape).astype(get_default_dtype())


class Linear(Module):
    def __init__(self, din, dout, rng, bias=True):
        super().__init__()
        self.din, self.dout = din, dout
        self.weight = Param(kaiming_uniform(rng, din, (din, dout)))
        if bias:
            self.bias = Param(np.zeros(dout, dtype=get_default_dtype()))
        else:
            self.bias = None

    def __call__(self, x):
        return T.linear(x, self.weight, self.bias)


class BatchNorm(Module):
    """Batch normalisation over the last axis; all leading axes are rows."""

    def __init__(self, dim, momentum=0.9, eps=1e-5):
        super().__init__()
        dtype = get_default_dtype()
        self.dim = dim
        self.momentum = momentum
        self.eps = eps
        self.gamma = Param(np.ones(dim, dtype=dtype))
        self.beta = Param(np.zeros(dim, dtype=dtype))
        self.register_buffer("running_mean", np.zeros(dim, dtype=dtype))
        self.register_buffer("running_var", np.ones(dim, dtype=dtype))

    def __call__(self, x):
        return T.batch_norm(x, self.gamma, self.beta, self.running_mean,
                            self.running_var, self.training, self.momentum, self.eps)
