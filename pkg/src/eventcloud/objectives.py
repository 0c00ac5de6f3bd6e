"""Training losses and evaluation metrics."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ContractError, ShapeError


def smoothed_targets(labels, n, eps):
    labels = np.asarray(labels, dtype=np.int64)
    if n < 2:
        raise ContractError("label smoothing needs at least 2 classes")
    if labels.size and (labels.min() < 0 or labels.max() >= n):
        raise ContractError(f"class index out of range [0, {n})")
    q = np.full(labels.shape + (n,), eps / (n - 1))
    np.put_along_axis(q, labels[..., None], 1.0 - eps, axis=-1)
    return q


def label_smooth_ce(logits, labels, eps=0.1):
    """Mean cross-entropy against ``1-eps`` on the true class and ``eps/(n-1)`` elsewhere.

    ``logits`` is ``[n]`` or ``[B, n]``; ``labels`` a class index or ``[B]``.
    """
    logits = T.as_tensor(logits)
    n = logits.shape[-1]
    q = smoothed_targets(labels, n, eps).astype(logits.dtype)
    if q.shape != logits.shape:
        raise ShapeError(f"{q.shape[:-1]} labels for logits of shape {logits.shape}")
    nll = T.neg(T.sum(T.mul(T.log_softmax(logits, axis=-1), q), axis=-1))
    return T.mean(nll)


def cross_entropy(logits, labels):
    return label_smooth_ce(logits, labels, 0.0)


def cpr_loss(p_hat, q_hat, p, q, weights=(), alpha=1.0, beta=1.0, lam=1e-5):
    """``alpha*|p_hat - p| + beta*|q_hat - q| + lam*sum(w^2)``, averaged over the batch.

    Norms are plain Euclidean (not squared); the gradient at zero error is 0.
    """
    p_hat, q_hat = T.as_tensor(p_hat), T.as_tensor(q_hat)
    dp = T.norm(T.sub(p_hat, np.asarray(p, dtype=p_hat.dtype)), axis=-1)
    dq = T.norm(T.sub(q_hat, np.asarray(q, dtype=q_hat.dtype)), axis=-1)
    loss = T.add(T.mul(T.mean(dp), alpha), T.mul(T.mean(dq), beta))
    if lam and weights:
        reg = None
        for w in weights:
            term = T.sum(T.square(w))
            reg = term if reg is None else T.add(reg, term)
        loss = T.add(loss, T.mul(reg, lam))
    return loss


def wmse(pred, target, w_x=1.0, w_y=1.0):
    """``w_x*mean((x_hat-x)^2) + w_y*mean((y_hat-y)^2)`` for ``[..., 2]`` predictions."""
    pred = T.as_tensor(pred)
    target = np.asarray(target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    err = T.square(T.sub(pred, target))
    per_axis = T.mean(T.reshape(err, (-1, 2)), axis=0)
    return T.sum(T.mul(per_axis, np.array([w_x, w_y], dtype=pred.dtype)))


def accuracy(logits, labels):
    logits = np.asarray(getattr(logits, "data", logits))
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ContractError("accuracy of an empty set")
    if len(logits) != len(labels):
        raise ShapeError("predictions and labels differ in length")
    return float(np.mean(np.argmax(logits, axis=-1) == labels))


def pose_error(p_hat, q_hat, p, q):
    """Mean translation error (input units) and rotation error in degrees.

    Rotations are Euler-angle triplets in radians; the error is the Euclidean
    distance between the triplets.
    """
    dp = np.linalg.norm(np.asarray(p_hat, np.float64) - np.asarray(p, np.float64), axis=-1)
    dq = np.linalg.norm(np.asarray(q_hat, np.float64) - np.asarray(q, np.float64), axis=-1)
    return float(np.mean(dp)), float(np.degrees(np.mean(dq)))


def pixel_distances(preds, gts):
    preds = np.asarray(preds, np.float64)
    gts = np.asarray(gts, np.float64)
    if preds.shape != gts.shape:
        raise ShapeError(f"prediction {preds.shape} and ground truth {gts.shape} differ")
    return np.linalg.norm(preds - gts, axis=-1)


def pixel_rate(preds, gts, p):
    """Fraction of predictions strictly closer than ``p`` pixels."""
    return float(np.mean(pixel_distances(preds, gts) < p))


def mse_px(preds, gts):
    return float(np.mean(pixel_distances(preds, gts) ** 2))


def mean_px(preds, gts):
    return float(np.mean(pixel_distances(preds, gts)))
