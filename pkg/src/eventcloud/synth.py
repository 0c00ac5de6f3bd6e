"""Synthetic event recordings for desk-scale training runs.

Classification: a small blob moves on a 128x128 sensor during one window.
Class 0 sweeps left to right along a line, class 1 orbits a circle in one
direction, class 2 swings around the same circle and back. Classes 1 and 2
light up the same pixels, so only the timing separates them.

Eye tracking: a dot on a 240x180 sensor follows a smooth random path and
emits events along its rim; the label is the dot centre at window end.
"""

from __future__ import annotations

import os

import numpy as np

from .events import EventStream, make_stream, write_events, write_manifest

CLASS_SIZE = 128
CLASS_WINDOW_US = 500_000
EYE_W, EYE_H = 240, 180
EYE_WINDOW_US = 4_400


def _rng(seed, split, index):
    return np.random.default_rng([seed, split, index])


def class_params(rng):
    return {
        "cx": rng.uniform(44, 84),
        "cy": rng.uniform(44, 84),
        "r": rng.uniform(18, 34),
        "phase": rng.uniform(0, 2 * np.pi),
        "dir": rng.choice([-1.0, 1.0]),
    }


def emitter_path(cls, prm, s):
    """Emitter centre for class ``cls`` at window fraction ``s`` in [0, 1)."""
    s = np.asarray(s, dtype=np.float64)
    if cls == 0:
        x = prm["cx"] - prm["r"] + 2 * prm["r"] * s
        y = np.full_like(s, prm["cy"])
        return x, y
    if cls == 1:
        ang = prm["phase"] + prm["dir"] * 2 * np.pi * s
    elif cls == 2:
        tri = 1.0 - np.abs(2.0 * s - 1.0)  # 0 -> 1 -> 0
        ang = prm["phase"] + prm["dir"] * 2 * np.pi * tri
    else:
        raise ValueError(f"unknown class {cls}")
    return prm["cx"] + prm["r"] * np.cos(ang), prm["cy"] + prm["r"] * np.sin(ang)


def class_window(cls, rng, n_signal=1500, noise_frac=0.1, spread=1.2):
    """Events of one classification window (microsecond timestamps from 0)."""
    prm = class_params(rng)
    t = np.sort(rng.integers(0, CLASS_WINDOW_US, size=n_signal))
    x, y = emitter_path(cls, prm, t / CLASS_WINDOW_US)
    x = x + rng.normal(0, spread, n_signal)
    y = y + rng.normal(0, spread, n_signal)
    n_noise = int(round(n_signal * noise_frac / (1 - noise_frac)))
    t = np.concatenate([t, rng.integers(0, CLASS_WINDOW_US, size=n_noise)])
    x = np.concatenate([x, rng.uniform(0, CLASS_SIZE, n_noise)])
    y = np.concatenate([y, rng.uniform(0, CLASS_SIZE, n_noise)])
    xi = np.clip(np.floor(x), 0, CLASS_SIZE - 1).astype(np.int64)
    yi = np.clip(np.floor(y), 0, CLASS_SIZE - 1).astype(np.int64)
    p = rng.integers(0, 2, size=len(t))
    return make_stream(t, xi, yi, p, CLASS_SIZE, CLASS_SIZE)


def bhattacharyya(a, b):
    pa = a / a.sum()
    pb = b / b.sum()
    return float(np.sum(np.sqrt(pa * pb)))


def xy_histogram(streams, bins=32, size=CLASS_SIZE):
    h = np.zeros((bins, bins))
    for s in streams:
        hh, _, _ = np.histogram2d(s.x, s.y, bins=bins, range=[[0, size], [0, size]])
        h += hh
    return h


def _write_split(out_dir, split, entries):
    d = os.path.join(out_dir, split)
    os.makedirs(d, exist_ok=True)
    manifest = []
    for i, (stream, label) in enumerate(entries):
        path = os.path.join(d, f"w{i:06d}.evt")
        write_events(stream, path, "binary")
        manifest.append((path, label))
    write_manifest(os.path.join(d, "manifest.txt"), manifest)


def synth_classification(out_dir, seed=0, n_classes=3, n_train=2400, n_test=600, n_signal=1500,
                         noise_frac=0.1):
    """Write ``train/`` and ``test/`` splits with balanced labels."""
    if n_classes < 1 or n_classes > 3:
        raise ValueError("n_classes must be 1, 2 or 3")
    for split_id, (split, n) in enumerate((("train", n_train), ("test", n_test))):
        entries = []
        for i in range(n):
            cls = i % n_classes
            rng = _rng(seed, split_id, i)
            entries.append((class_window(cls, rng, n_signal, noise_frac), [cls]))
        _write_split(out_dir, split, entries)


# ---------------------------------------------------------------- eye

def smooth_path(rng, n_knots, duration_us, margin=20.0, width=EYE_W, height=EYE_H):
    """Catmull-Rom spline through random knots spaced evenly over ``duration_us``."""
    kx = rng.uniform(margin, width - margin, n_knots + 2)
    ky = rng.uniform(margin, height - margin, n_knots + 2)
    seg = duration_us / max(n_knots - 1, 1)

    def at(t):
        t = np.asarray(t, dtype=np.float64)
        u = np.clip(t / seg, 0, n_knots - 1 - 1e-9)
        i = np.floor(u).astype(np.int64)
        f = u - i
        out = []
        for k in (kx, ky):
            p0, p1, p2, p3 = k[i], k[i + 1], k[i + 2], k[i + 3]
            out.append(0.5 * ((2 * p1) + (-p0 + p2) * f + (2 * p0 - 5 * p1 + 4 * p2 - p3) * f * f
                              + (-p0 + 3 * p1 - 3 * p2 + p3) * f ** 3))
        return np.clip(out[0], margin / 2, width - margin / 2), np.clip(out[1], margin / 2, height - margin / 2)

    return at


def eye_recording(rng, duration_us, path=None, radius=None, rate_per_ms=400, noise_frac=0.03,
                  width=EYE_W, height=EYE_H):
    """A dot rim event stream and the path function that produced it."""
    if path is None:
        path = smooth_path(rng, max(2, int(duration_us // 400_000) + 2), duration_us,
                           width=width, height=height)
    radius = radius if radius is not None else rng.uniform(8, 12)
    n = int(rate_per_ms * duration_us / 1000)
    t = np.sort(rng.integers(0, duration_us, size=n))
    cx, cy = path(t)
    ang = rng.uniform(0, 2 * np.pi, n)
    rr = radius + rng.normal(0, 0.6, n)
    x = cx + rr * np.cos(ang)
    y = cy + rr * np.sin(ang)
    n_noise = int(round(n * noise_frac))
    t = np.concatenate([t, rng.integers(0, duration_us, size=n_noise)])
    x = np.concatenate([x, rng.uniform(0, width, n_noise)])
    y = np.concatenate([y, rng.uniform(0, height, n_noise)])
    xi = np.clip(np.round(x), 0, width - 1).astype(np.int64)
    yi = np.clip(np.round(y), 0, height - 1).astype(np.int64)
    p = (np.cos(ang) > 0).astype(np.int64)
    p = np.concatenate([p, rng.integers(0, 2, size=n_noise)])
    return make_stream(t, xi, yi, p, width, height), path


def eye_windows(rng, n_windows, window_us=EYE_WINDOW_US, gap_us=40_000, **kw):
    """Windows cut from one recording, each labelled with the centre at its end."""
    duration = n_windows * (window_us + gap_us)
    stream, path = eye_recording(rng, duration, **kw)
    t = stream.t.astype(np.int64)
    out = []
    for i in range(n_windows):
        lo = i * (window_us + gap_us)
        a, b = np.searchsorted(t, [lo, lo + window_us])
        sub = stream.subset(np.arange(a, b))
        sub = EventStream(sub.t - np.uint64(lo), sub.x, sub.y, sub.p, sub.width, sub.height)
        cx, cy = path(lo + window_us)
        out.append((sub, [float(cx), float(cy)]))
    return out


def synth_eye(out_dir, seed=0, n_train=1600, n_test=400, windows_per_recording=8, **kw):
    for split_id, (split, n) in enumerate((("train", n_train), ("test", n_test))):
        entries = []
        rec = 0
        while len(entries) < n:
            m = min(windows_per_recording, n - len(entries))
            entries.extend(eye_windows(_rng(seed, 10 + split_id, rec), m, **kw))
            rec += 1
        _write_split(out_dir, split, entries)
