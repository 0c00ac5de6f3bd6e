"""Per-stage building blocks: residual MLP, local grouping extractor,
temporal aggregation over neighbours, and the global sequence extractor.

Tensors are batched: a stage sees ``[B, T, D]`` point features and the
precomputed grouping of every sample (see :func:`geometry.plan_stages`).
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .nn import BatchNorm, Linear, Module
from .ssm import MambaBlock


class ResBlock(Module):
    """``relu(x + BN(Lin(relu(BN(Lin(x))))))`` with a ``hidden`` bottleneck."""

    def __init__(self, dim, rng, hidden=None):
        super().__init__()
        hidden = hidden or dim
        self.dim = dim
        self.fc1 = Linear(dim, hidden, rng)
        self.bn1 = BatchNorm(hidden)
        self.fc2 = Linear(hidden, dim, rng)
        self.bn2 = BatchNorm(dim)

    def __call__(self, x):
        if x.shape[-1] != self.dim:
            raise ShapeError(f"residual block of width {self.dim} got input width {x.shape[-1]}")
        h = T.relu(self.bn1(self.fc1(x)))
        return T.relu(T.add(x, self.bn2(self.fc2(h))))


def res_block(x, block):
    return block(x)


def tag_attention(S, w, b=None, return_weights=False):
    """Softmax-weighted sum over the neighbour axis (axis 2 of ``[B, T', K, D]``).

    ``w`` is the ``D x 1`` scorer weight; scores are normalised over K.
    """
    scores = T.linear(S, w, b)
    a = T.softmax(scores, axis=-2)
    out = T.sum(T.mul(S, a), axis=-2)
    return (out, a) if return_weights else out


def max_aggregate(S):
    """Per-feature maximum over the neighbour axis."""
    return T.max(S, axis=-2)


class TemporalAttention(Module):
    def __init__(self, dim, rng):
        super().__init__()
        self.score = Linear(dim, 1, rng)

    def __call__(self, S, return_weights=False):
        return tag_attention(S, self.score.weight, self.score.bias, return_weights)


class LocalExtractor(Module):
    """Group lift and residual block.

    The lift maps ``[rel (3) | neighbour feats (D) | centroid feats (D)]`` to
    ``dout``. It is evaluated as ``rel@W_r + gather(F@W_n) + gather(F@W_c)``,
    which equals the linear layer on the concatenated group rows but projects
    each point once instead of once per group it belongs to.
    """

    def __init__(self, din, dout, rng, res_hidden=None):
        super().__init__()
        self.din, self.dout = din, dout
        self.lift = Linear(3 + 2 * din, dout, rng)
        self.lift_bn = BatchNorm(dout)
        self.res = ResBlock(dout, rng, res_hidden)

    def __call__(self, feats, neighbors, centroids, rel):
        """``feats`` [B, T, D] (or None when D = 0); ``neighbors`` [B, T', K] and
        ``centroids`` [B, T'] index the flattened ``B*T`` rows; ``rel`` [B, T', K, 3]."""
        W, D = self.lift.weight, self.din
        h = T.linear(T.Tensor(rel, dtype=W.dtype), W[:3], self.lift.bias)
        if D:
            if feats is None or feats.shape[-1] != D:
                raise ShapeError(f"local extractor expects feature width {D}")
            flat = T.reshape(feats, (-1, D))
            h = T.add(h, T.take_rows(T.linear(flat, W[3:3 + D]), neighbors))
            cent = T.take_rows(T.linear(flat, W[3 + D:]), centroids)
            h = T.add(h, T.reshape(cent, centroids.shape + (1, self.dout)))
        h = T.relu(self.lift_bn(h))
        return self.res(h)


def local_fe(extractor, feats, neighbors, centroids, rel):
    return extractor(feats, neighbors, centroids, rel)


class GlobalExtractor(Module):
    """Sequence block over the time-ordered centroids, then a residual block."""

    def __init__(self, dim, rng, state=16, expand=2, conv_width=4, res_hidden=None):
        super().__init__()
        self.mamba = MambaBlock(dim, rng, state=state, expand=expand, conv_width=conv_width)
        self.res = ResBlock(dim, rng, res_hidden)

    def __call__(self, x):
        return self.res(self.mamba(x))


def global_fe(extractor, x):
    return extractor(x)


class Stage(Module):
    """Local extraction, aggregation over K, then global extraction."""

    def __init__(self, din, dout, rng, aggregate="attention", res_expansion=1.0,
                 state=16, expand=2, conv_width=4):
        super().__init__()
        hidden = max(1, int(round(dout * res_expansion)))
        self.local = LocalExtractor(din, dout, rng, hidden)
        self.aggregate = aggregate
        if aggregate == "attention":
            self.tag = TemporalAttention(dout, rng)
        self.glob = GlobalExtractor(dout, rng, state, expand, conv_width, hidden)

    def __call__(self, feats, neighbors, centroids, rel):
        S = self.local(feats, neighbors, centroids, rel)
        SA = self.tag(S) if self.aggregate == "attention" else max_aggregate(S)
        return self.glob(SA)


def batch_plan(plans, stage, n_in):
    """Stack one stage of per-sample plans, offsetting indices into flat rows."""
    B = len(plans)
    off = (np.arange(B, dtype=np.int64) * n_in)
    nbr = np.stack([p[stage].neighbors for p in plans]) + off[:, None, None]
    cent = np.stack([p[stage].centroids for p in plans]) + off[:, None]
    rel = np.stack([p[stage].rel for p in plans])
    return nbr, cent, rel
