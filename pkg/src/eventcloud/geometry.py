"""Farthest point sampling, KNN grouping and group standardisation.

All distances are squared Euclidean in the normalised ``(x, y, t)`` cube,
accumulated in float64 as ``dx*dx + dy*dy + dz*dz``. Point sets handed to
these functions are expected in temporal order (ties by row index), which is
what the event pipeline and :func:`sort_centroids_by_time` produce.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ContractError

STD_FLOOR = 1e-5


@dataclass
class StageState:
    coords: np.ndarray  # T x 3 raw normalised (x, y, t)
    feats: np.ndarray | None = None  # T x D, None at the first stage

    @property
    def T(self):
        return self.coords.shape[0]


@dataclass
class GroupStats:
    std: np.ndarray  # one per group, >= STD_FLOOR


@dataclass
class GroupTensor:
    indices: np.ndarray  # T' x K
    rel_coords: np.ndarray  # T' x K x 3 standardised offsets
    group_feats: np.ndarray  # T' x K x (3 + 2D)
    stats: GroupStats


def fps(coords, n):
    """Greedy farthest point sampling from row 0; ties go to the lowest index."""
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise ContractError(f"fps expects T x 3 coordinates, got {coords.shape}")
    if n > coords.shape[0]:
        raise ContractError(f"cannot pick {n} of {coords.shape[0]} points")
    if n < 0:
        raise ContractError("negative sample count")
    return kernels.fps(coords, int(n))


def sq_dist(a, b):
    """Pairwise squared distances, ``a`` rows against ``b`` rows."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    dx = a[:, None, 0] - b[None, :, 0]
    dy = a[:, None, 1] - b[None, :, 1]
    dz = a[:, None, 2] - b[None, :, 2]
    return dx * dx + dy * dy + dz * dz


def _time_order(coords, idx):
    return np.take_along_axis(idx, np.lexsort((idx, coords[idx, 2]), axis=-1), axis=-1)


def knn_indices(coords, centroid_idx, K):
    """The K nearest rows to each centroid (ties by lowest index), in time order."""
    coords = np.asarray(coords, dtype=np.float64)
    T = coords.shape[0]
    if K > T:
        raise ContractError(f"K={K} exceeds point count {T}")
    if K < 1:
        raise ContractError("K must be at least 1")
    centroid_idx = np.asarray(centroid_idx, dtype=np.int64)
    d = sq_dist(coords[centroid_idx], coords)
    if K == T:
        idx = np.broadcast_to(np.arange(T), d.shape).copy()
    else:
        # exact K smallest with index tie-break: everything strictly below the
        # K-th value plus the lowest-indexed rows equal to it
        kth = np.partition(d, K - 1, axis=1)[:, K - 1:K]
        below = d < kth
        need = K - below.sum(axis=1, keepdims=True)
        tie = d == kth
        take = below | (tie & (np.cumsum(tie, axis=1) <= need))
        idx = np.nonzero(take)[1].reshape(len(centroid_idx), K)
    return _time_order(coords, idx)


def standardize_group(group_coords, centroid):
    """Offsets from the centroid divided by the sample std of all 3K raw values."""
    g = np.asarray(group_coords, dtype=np.float64)
    c = np.asarray(centroid, dtype=np.float64)
    if g.ndim == 2:
        rel, stats = standardize_group(g[None], c[None])
        return rel[0], stats
    flat = g.reshape(g.shape[0], -1)
    if flat.shape[1] < 2:
        std = np.full(g.shape[0], STD_FLOOR)
    else:
        std = np.maximum(flat.std(axis=1, ddof=1), STD_FLOOR)
    rel = (g - c[:, None, :]) / std[:, None, None]
    return rel, GroupStats(std)


def knn_group(coords, feats, centroid_idx, K):
    """Group, standardise and assemble ``[rel (3) | neighbour feats | centroid feats]``."""
    coords = np.asarray(coords, dtype=np.float64)
    centroid_idx = np.asarray(centroid_idx, dtype=np.int64)
    idx = knn_indices(coords, centroid_idx, K)
    rel, stats = standardize_group(coords[idx], coords[centroid_idx])
    parts = [rel]
    if feats is not None and feats.shape[1]:
        feats = np.asarray(feats)
        parts.append(feats[idx])
        parts.append(np.broadcast_to(feats[centroid_idx][:, None, :], idx.shape + (feats.shape[1],)))
    return GroupTensor(idx, rel, np.concatenate(parts, axis=-1), stats)


def time_order(coords, idx=None):
    """Permutation sorting rows by raw timestamp, ties by row index."""
    coords = np.asarray(coords)
    if idx is None:
        return np.lexsort((np.arange(coords.shape[0]), coords[:, 2]))
    idx = np.asarray(idx, dtype=np.int64)
    return idx[np.lexsort((idx, coords[idx, 2]))]


def sort_centroids_by_time(state):
    perm = time_order(state.coords)
    feats = None if state.feats is None else state.feats[perm]
    return StageState(state.coords[perm], feats)


@dataclass
class StagePlan:
    centroids: np.ndarray  # T' indices into the stage input, time ordered
    neighbors: np.ndarray  # T' x K indices into the stage input, time ordered per group
    rel: np.ndarray  # T' x K x 3 standardised offsets (float32)


def plan_stages(coords, centroid_counts, K):
    """Precompute the sampling/grouping of every stage for one sample.

    Only raw coordinates decide these, so the result can be cached and reused
    across epochs. Centroids of each stage become the next stage's points.
    """
    coords = np.asarray(coords, dtype=np.float64)
    plans = []
    for n in centroid_counts:
        cent = time_order(coords, fps(coords, n))
        nbr = knn_indices(coords, cent, K)
        rel, _ = standardize_group(coords[nbr], coords[cent])
        plans.append(StagePlan(cent, nbr, rel.astype(np.float32)))
        coords = coords[cent]
    return plans
