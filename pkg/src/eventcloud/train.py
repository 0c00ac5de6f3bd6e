"""Training and evaluation loops."""

from __future__ import annotations

import ctypes
import os
import time

import numpy as np

from . import tensor as T
from .data import load_dataset
from .errors import ContractError
from .model import EventModel, load_checkpoint, read_checkpoint, save_checkpoint
from .nn import BatchNorm
from .objectives import (accuracy, cpr_loss, label_smooth_ce, mean_px, mse_px, pixel_rate,
                         pose_error, wmse)
from .optim import Adam, cosine_lr

METRICS_HEADER = "epoch,train_loss,eval_metric,lr,seconds"


def batches(n, batch_size, rng):
    """Shuffled index batches; a trailing singleton joins the previous batch
    because batch statistics need two rows."""
    order = rng.permutation(n)
    out = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    if len(out) > 1 and len(out[-1]) < 2:
        last = out.pop()
        out[-1] = np.concatenate([out[-1], last])
    return out


def _check_labels(cfg, ds, where):
    width = ds.labels.shape[1]
    task = cfg.model.task
    if task == "classify":
        if width != 1:
            raise ContractError(f"{where}: classification needs one label per sample, got {width}")
        lab = ds.labels[:, 0]
        if np.any(lab != np.round(lab)) or lab.min() < 0 or lab.max() >= cfg.model.classes:
            raise ContractError(f"{where}: class labels outside [0, {cfg.model.classes})")
    elif width != cfg.model.out_dim:
        raise ContractError(f"{where}: task {task} needs {cfg.model.out_dim} label values, got {width}")


def _targets(cfg, ds, idx):
    y = ds.labels[idx]
    if cfg.model.task == "classify":
        return y[:, 0].astype(np.int64)
    if cfg.model.task == "eye":
        return y / np.array([ds.width, ds.height])
    return y


def compute_loss(cfg, model, out, target):
    lc = cfg.loss
    task = cfg.model.task
    if task == "classify":
        return label_smooth_ce(out, target, lc.label_smoothing)
    if task == "eye":
        return wmse(out, target, lc.w_x, lc.w_y)
    weights = [p for name, p in model.named_params() if name.endswith("weight")]
    return cpr_loss(out[:, :3], out[:, 3:], target[:, :3], target[:, 3:], weights,
                    lc.alpha, lc.beta, lc.lam)


def predict(model, ds, batch_size=64):
    was = model.training
    model.eval()
    outs = []
    try:
        for lo in range(0, len(ds), batch_size):
            idx = np.arange(lo, min(lo + batch_size, len(ds)))
            outs.append(model(ds.coords[idx], ds.plans(model, idx)).data)
    finally:
        model.train(was)
    return np.concatenate(outs)


def evaluate(cfg, model, ds, batch_size=64):
    """Metric dict for a split; ``metric`` is the selection score (higher is better)."""
    out = predict(model, ds, batch_size)
    task = cfg.model.task
    if task == "classify":
        acc = accuracy(out, ds.labels[:, 0].astype(np.int64))
        return {"metric": acc, "accuracy": acc}
    if task == "eye":
        px = out * np.array([ds.width, ds.height])
        err = mean_px(px, ds.labels)
        return {"metric": -err, "mean_px": err, "mse_px": mse_px(px, ds.labels),
                **{f"p{p}": pixel_rate(px, ds.labels, p) for p in (1, 3, 5, 10)}}
    m, deg = pose_error(out[:, :3], out[:, 3:], ds.labels[:, :3], ds.labels[:, 3:])
    return {"metric": -(m + deg), "meters": m, "degrees": deg}


REPORTED = {"classify": "accuracy", "eye": "mean_px", "cpr": "meters"}


def _verify_checkpoint(model, path):
    _, _, arrays = read_checkpoint(path)
    for name, arr in model.state_arrays().items():
        if not np.array_equal(arrays[name], np.asarray(arr, dtype=np.float32)):
            raise RuntimeError(f"checkpoint {path} does not reproduce {name}")


def freeze_batch_norm(model):
    """Normalise with the running statistics from here on; gamma and beta keep learning.

    In train mode every sample is normalised by its batch's mean, so an absolute
    quantity such as a position is only seen relative to the rest of the batch.
    """
    for m in model.modules():
        if isinstance(m, BatchNorm):
            m.train(False)


def train_loop(cfg, data_dir, out_dir, log=print, datasets=None, max_seconds=None, stop_when=None):
    """Train per ``cfg`` and write ``best.ckpt``, ``last.ckpt`` and ``metrics.csv``.

    Training ends early once ``max_seconds`` have elapsed or ``stop_when(metrics)``
    returns true after an epoch. Returns a summary dict with the best eval
    metrics and the per-epoch history (``elapsed`` counts from the call).
    """
    cfg.validate()
    start = time.perf_counter()
    train_ds, test_ds = datasets or load_dataset(data_dir, cfg.model.n_points, cfg.seed,
                                                 cfg.denoise, cfg.permute_time)
    _check_labels(cfg, train_ds, "train split")
    _check_labels(cfg, test_ds, "test split")
    os.makedirs(out_dir, exist_ok=True)
    model = EventModel(cfg.model)
    params = model.params()
    opt = Adam(params)
    n_batches = len(batches(len(train_ds), cfg.batch_size, np.random.default_rng(0)))
    total = cfg.epochs * n_batches
    metrics_path = os.path.join(out_dir, "metrics.csv")
    with open(metrics_path, "w", encoding="ascii") as fh:
        fh.write(METRICS_HEADER + "\n")
    best, history, step = None, [], 0
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        if cfg.resample and epoch > 1:
            train_ds.resample([cfg.seed, epoch])
        model.train()
        if cfg.freeze_bn_after and epoch > cfg.freeze_bn_after:
            freeze_batch_norm(model)
        rng = np.random.default_rng([cfg.seed, epoch])
        losses, lr = [], cfg.lr
        for idx in batches(len(train_ds), cfg.batch_size, rng):
            lr = cosine_lr(step, total, cfg.lr)
            target = _targets(cfg, train_ds, idx)
            with T.Tape() as tape:
                out = model(train_ds.coords[idx], train_ds.plans(model, idx))
                loss = compute_loss(cfg, model, out, target)
            T.backward(tape, loss, params)
            if lr > 0:
                opt.step(lr)
            losses.append(float(loss.item()))
            step += 1
        ev = evaluate(cfg, model, test_ds)
        seconds = time.perf_counter() - t0
        train_loss = float(np.mean(losses))
        value = ev[REPORTED[cfg.model.task]]
        with open(metrics_path, "a", encoding="ascii") as fh:
            fh.write(f"{epoch},{train_loss!r},{value!r},{lr!r},{seconds:.3f}\n")
        save_checkpoint(model, os.path.join(out_dir, "last.ckpt"))
        _verify_checkpoint(model, os.path.join(out_dir, "last.ckpt"))
        if best is None or ev["metric"] > best["metric"]:
            best = dict(ev, epoch=epoch)
            save_checkpoint(model, os.path.join(out_dir, "best.ckpt"))
            _verify_checkpoint(model, os.path.join(out_dir, "best.ckpt"))
        history.append(dict(ev, epoch=epoch, train_loss=train_loss, lr=lr, seconds=seconds,
                            elapsed=time.perf_counter() - start))
        log(f"epoch {epoch}/{cfg.epochs} loss {train_loss:.4f} "
            + " ".join(f"{k} {v:.4f}" for k, v in ev.items() if k != "metric")
            + f" lr {lr:.2e} {seconds:.1f}s")
        if stop_when is not None and stop_when(ev):
            log("target reached, stopping")
            break
        if max_seconds is not None and time.perf_counter() - start > max_seconds:
            log("time budget reached, stopping")
            break
    return {"best": best, "history": history, "seconds": time.perf_counter() - start,
            "model": model}


def eval_checkpoint(cfg, ckpt, data_dir, split="test"):
    from .data import load_split
    model = load_checkpoint(EventModel(cfg.model), ckpt)
    ds = load_split(os.path.join(data_dir, split), cfg.model.n_points, cfg.seed + (split == "test"),
                    cfg.denoise, cfg.permute_time)
    _check_labels(cfg, ds, f"{split} split")
    return evaluate(cfg, model, ds)


def tune_allocator():
    """Keep freed large blocks in the heap instead of returning them to the OS.

    Training allocates and frees many multi-megabyte temporaries per step;
    with glibc's defaults each one is a fresh mmap and pays page faults.
    Does nothing where glibc is not available.
    """
    try:
        libc = ctypes.CDLL("libc.so.6")
        libc.mallopt(-3, 1 << 30)  # M_MMAP_THRESHOLD
        libc.mallopt(-1, 1 << 31)  # M_TRIM_THRESHOLD
    except (OSError, AttributeError):
        pass
