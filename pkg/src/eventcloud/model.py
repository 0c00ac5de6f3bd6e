"""The three-stage network with its task head, size accounting and checkpoints."""

from __future__ import annotations

import math
import os
import struct

import numpy as np

from . import tensor as T
from .blocks import Stage, batch_plan
from .config import ModelConfig
from .errors import CheckpointError, ContractError
from .geometry import plan_stages
from .nn import Linear, Module

CKPT_MAGIC = b"EMCK"
CKPT_VERSION = 1


def pool_final(x):
    """Per-feature maximum over the remaining centroids (axis -2)."""
    return T.max(x, axis=-2)


class EventModel(Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        rng = np.random.default_rng(config.seed)
        din = 3 if config.coord_feats else 0
        self.n_stages = len(config.dims)
        for i, dout in enumerate(config.dims):
            self.add(f"stage{i}", Stage(din, dout, rng, config.aggregate, config.res_expansion,
                                        config.ssm_state, config.ssm_expand, config.conv_width))
            din = dout
        self.head1 = Linear(din, config.head_hidden, rng)
        self.head2 = Linear(config.head_hidden, config.out_dim, rng)

    def stages(self):
        return [getattr(self, f"stage{i}") for i in range(self.n_stages)]

    def plan(self, coords):
        c = self.config
        return plan_stages(coords, c.centroids, c.k)

    def features(self, coords, plans):
        """Pooled feature vector per sample, ``[B, dims[-1]]``."""
        coords = np.asarray(coords)
        B, N = coords.shape[:2]
        if N != self.config.n_points:
            raise ContractError(f"model expects {self.config.n_points} points, got {N}")
        feats = T.Tensor(coords, dtype=T.get_default_dtype()) if self.config.coord_feats else None
        n_in = N
        for i, stage in enumerate(self.stages()):
            nbr, cent, rel = batch_plan(plans, i, n_in)
            feats = stage(feats, nbr, cent, rel)
            n_in = cent.shape[1]
        return pool_final(feats)

    def __call__(self, coords, plans=None):
        coords = np.asarray(coords)
        single = coords.ndim == 2
        if single:
            coords = coords[None]
        if plans is None:
            plans = [self.plan(c) for c in coords]
        out = self.head2(T.relu(self.head1(self.features(coords, plans))))
        if self.config.task == "eye":
            out = T.sigmoid(out)
        return T.reshape(out, out.shape[1:]) if single else out


def build(config):
    return EventModel(config)


def forward(model, sample):
    """Eval-mode output for one :class:`PointSample` (or an ``N x 3`` array)."""
    coords = getattr(sample, "coords", sample)
    was = model.training
    model.eval()
    try:
        return model(coords).data
    finally:
        model.train(was)


# ---------------------------------------------------------------- accounting

def count_params(config_or_model):
    model = config_or_model if isinstance(config_or_model, Module) else EventModel(config_or_model)
    return int(sum(p.size for p in model.params()))


def _res_macs(rows, d, h):
    return rows * (d * h + h * d)


def count_flops(config, n_points=None):
    """Forward FLOPs (2 x multiply-accumulates) for one sample.

    Counted: sampling and grouping distances, the group lift and residual
    layers, attention scoring and weighting, the sequence block projections,
    convolution and scan, and the head. Normalisation and activations are not.
    """
    c = config
    N = n_points or c.n_points
    scale = N / c.n_points
    centroids = [max(1, int(round(t * scale))) for t in c.centroids]
    din = 3 if c.coord_feats else 0
    T_in = N
    macs = 0
    for tp, d in zip(centroids, c.dims):
        h = max(1, int(round(d * c.res_expansion)))
        K = min(c.k, T_in)
        macs += 2 * tp * T_in * 3  # fps + knn distances
        macs += tp * K * (3 + 2 * din) * d  # group lift
        macs += _res_macs(tp * K, d, h)
        if c.aggregate == "attention":
            macs += tp * K * d * 2  # scoring and weighted sum
        di = c.ssm_expand * d
        r = math.ceil(d / 16)
        S = c.ssm_state
        macs += tp * (d * 2 * di + di * c.conv_width + di * (r + 2 * S) + r * di
                      + di * S * 3 + di + di * d)
        macs += _res_macs(tp, d, h)
        T_in, din = tp, d
    macs += c.dims[-1] * c.head_hidden + c.head_hidden * c.out_dim
    return 2 * macs


# ---------------------------------------------------------------- checkpoints

def _records(model):
    return list(model.state_arrays().items())


def save_checkpoint(model, path):
    """Write parameters and normalisation buffers; the file is replaced atomically."""
    chunks = [CKPT_MAGIC, struct.pack("<IQ", CKPT_VERSION, model.config.digest())]
    for name, arr in _records(model):
        raw = name.encode("ascii")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        chunks.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(chunks))
    os.replace(tmp, path)


def read_checkpoint(path):
    """Return ``(version, digest, {name: array})`` after validating the framing."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != CKPT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint")
    version, digest = struct.unpack_from("<IQ", blob, 4)
    if version != CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    pos, arrays = 16, {}
    try:
        while pos < len(blob):
            (n,) = struct.unpack_from("<H", blob, pos)
            name = blob[pos + 2:pos + 2 + n].decode("ascii")
            pos += 2 + n
            (rank,) = struct.unpack_from("<B", blob, pos)
            shape = struct.unpack_from(f"<{rank}I", blob, pos + 1)
            pos += 1 + 4 * rank
            size = 4 * int(np.prod(shape, dtype=np.int64))
            if pos + size > len(blob):
                raise CheckpointError(f"{path}: truncated in array {name!r}")
            arrays[name] = np.frombuffer(blob, "<f4", int(np.prod(shape, dtype=np.int64)), pos).reshape(shape)
            pos += size
    except (struct.error, UnicodeDecodeError):
        raise CheckpointError(f"{path}: truncated or corrupt record") from None
    return version, digest, arrays


def load_checkpoint(model, path):
    """Fill ``model`` from ``path``; nothing is modified unless every check passes."""
    _, digest, arrays = read_checkpoint(path)
    if digest != model.config.digest():
        raise CheckpointError(f"{path}: written for a different model configuration")
    targets = dict(_records(model))
    if set(arrays) != set(targets):
        missing = sorted(set(targets) - set(arrays))
        extra = sorted(set(arrays) - set(targets))
        raise CheckpointError(f"{path}: missing {missing[:3]} unexpected {extra[:3]}")
    for name, arr in arrays.items():
        if arr.shape != targets[name].shape:
            raise CheckpointError(f"{path}: {name} has shape {arr.shape}, expected {targets[name].shape}")
    for name, arr in arrays.items():
        targets[name][...] = arr
    return model
