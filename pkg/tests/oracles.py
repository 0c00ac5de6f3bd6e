"""Slow, obviously-correct reference implementations used by the tests."""

import numpy as np


def sqd(p, q):
    d = [float(p[i]) - float(q[i]) for i in range(3)]
    return d[0] * d[0] + d[1] * d[1] + d[2] * d[2]


def fps_oracle(coords, n):
    """Greedy farthest point sampling by full recomputation, from row 0."""
    picks = [0] if n else []
    while len(picks) < n:
        best, best_d = -1, -1.0
        for i in range(len(coords)):
            if i in picks:
                continue
            d = min(sqd(coords[i], coords[j]) for j in picks)
            if d > best_d:  # strict: ties keep the lower index
                best, best_d = i, d
        picks.append(best)
    return picks


def knn_oracle(coords, centre, K):
    """K nearest by a full sort on (distance, index)."""
    order = sorted(range(len(coords)), key=lambda i: (sqd(coords[i], coords[centre]), i))
    return set(order[:K])


def scan_loop(u, delta, A, Bm, Cm, D):
    """Naive recurrence for one sequence with closed-form discretisation."""
    L, C = u.shape
    S = A.shape[1]
    h = np.zeros((C, S))
    y = np.zeros((L, C))
    for t in range(L):
        for c in range(C):
            for s in range(S):
                a = A[c, s]
                abar = np.exp(delta[t, c] * a)
                bbar = (abar - 1.0) / a * Bm[t, s]
                h[c, s] = abar * h[c, s] + bbar * u[t, c]
                y[t, c] += Cm[t, s] * h[c, s]
            y[t, c] += D[c] * u[t, c]
    return y


def quantized_cloud(rng, T, levels=None):
    """Random points; with ``levels`` coordinates snap to a grid to force ties."""
    pts = rng.random((T, 3))
    if levels:
        pts = np.floor(pts * levels) / levels
    return pts
