"""Loading preprocessed splits into point samples with cached grouping plans."""

from __future__ import annotations

import os

import numpy as np

from .errors import ContractError
from .events import denoise, detect_format, downsample, load_events, normalize, read_manifest


class PointDataset:
    """All samples of one split, sampled once with per-sample seeds.

    ``coords`` is ``[n, N, 3]`` float32; ``labels`` is ``[n, label_width]``.
    Grouping plans are computed on first use and kept until :meth:`resample`.
    """

    def __init__(self, coords, labels, width, height, degenerate=None, streams=None,
                 permute_time=False):
        self.coords = coords
        self.labels = labels
        self.width = width
        self.height = height
        self.degenerate = degenerate if degenerate is not None else np.zeros(len(coords), bool)
        self.streams = streams
        self.permute_time = permute_time
        self._plans = {}

    def __len__(self):
        return len(self.coords)

    def resample(self, seed):
        """Draw a fresh ``N``-point subset of every window (sample ``i`` uses ``[*seed, i]``)."""
        if self.streams is None:
            raise ContractError("resample needs the source streams")
        seed = list(np.atleast_1d(seed))
        for i, stream in enumerate(self.streams):
            s = sample_window(stream, self.coords.shape[1], seed + [i], self.permute_time)
            self.coords[i] = s.coords
            self.degenerate[i] = s.degenerate
        self._plans = {}

    def plans(self, model, idx):
        key = (tuple(model.config.centroids), model.config.k)
        cache = self._plans.setdefault(key, {})
        out = []
        for i in idx:
            i = int(i)
            if i not in cache:
                cache[i] = model.plan(self.coords[i])
            out.append(cache[i])
        return out


def sample_window(stream, N, seed, permute_time=False):
    """Downsample a whole-window stream to ``N`` rows and normalise.

    With ``permute_time`` the sampled timestamps are shuffled among the
    events before normalising, which keeps the spatial footprint and the
    time histogram but destroys the motion order.
    """
    pick = downsample(len(stream), N, seed)
    t = stream.t[pick].astype(np.int64)
    x, y = stream.x[pick], stream.y[pick]
    if permute_time:
        rng = np.random.default_rng([seed, 1])
        t = t[rng.permutation(len(t))]
        order = np.lexsort((np.arange(len(t)), t))
        t, x, y = t[order], x[order], y[order]
    return normalize(t, x, y, stream.width, stream.height)


def load_split(split_dir, n_points, seed=0, use_denoise=False, permute_time=False):
    manifest = os.path.join(split_dir, "manifest.txt")
    if not os.path.exists(manifest):
        raise ContractError(f"no manifest.txt in {split_dir}")
    entries = read_manifest(manifest)
    if not entries:
        raise ContractError(f"{manifest} lists no samples")
    coords = np.empty((len(entries), n_points, 3), dtype=np.float32)
    labels, streams, degenerate = [], [], np.zeros(len(entries), bool)
    width = height = None
    for i, (path, label) in enumerate(entries):
        stream = load_events(path)
        if use_denoise:
            stream = denoise(stream)
        if len(stream) == 0:
            raise ContractError(f"{path}: no events left to sample")
        s = sample_window(stream, n_points, [seed, i], permute_time)
        coords[i] = s.coords
        degenerate[i] = s.degenerate
        labels.append(label)
        streams.append(stream)
        width, height = stream.width, stream.height
    widths = {len(l) for l in labels}
    if len(widths) != 1:
        raise ContractError(f"{manifest}: inconsistent label widths {sorted(widths)}")
    return PointDataset(coords, np.array(labels, dtype=np.float64), width, height, degenerate,
                        streams, permute_time)


def load_dataset(data_dir, n_points, seed=0, use_denoise=False, permute_time=False):
    return (load_split(os.path.join(data_dir, "train"), n_points, seed, use_denoise, permute_time),
            load_split(os.path.join(data_dir, "test"), n_points, seed + 1, use_denoise, permute_time))


def _label_track(path):
    track = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if track.shape[1] < 2:
        raise ContractError(f"{path}: label track needs t_us plus at least one value")
    return track[np.argsort(track[:, 0], kind="stable")]


def prep_dataset(in_dir, out_dir, cfg, fmt="binary", width=None, height=None):
    """Cut recordings into windows.

    ``in_dir/<split>/recordings.txt`` lists ``path[,label...]`` per recording.
    Classification recordings carry their class there; regression recordings
    need a ``<path>.labels.csv`` track of ``t_us,value...`` rows, and each
    window takes the last row at or before its end time. Window files and
    ``manifest.txt`` go to ``out_dir/<split>/``. Returns windows per split.
    """
    from .events import slide_windows, write_events, write_manifest
    counts = {}
    for split in ("train", "test"):
        listing = os.path.join(in_dir, split, "recordings.txt")
        if not os.path.exists(listing):
            continue
        dest = os.path.join(out_dir, split)
        os.makedirs(dest, exist_ok=True)
        manifest = []
        for rec_path, labels in read_manifest(listing):
            if detect_format(rec_path) == "binary":
                stream = load_events(rec_path)  # carries its own sensor size
            else:
                stream = load_events(rec_path, "csv", width or cfg.width, height or cfg.height)
            if cfg.denoise:
                stream = denoise(stream)
            track = None if cfg.model.task == "classify" else _label_track(rec_path + ".labels.csv")
            if cfg.model.task == "classify" and len(labels) != 1:
                raise ContractError(f"{listing}: {rec_path} needs exactly one class label")
            for w in slide_windows(stream, cfg.window_us, cfg.overlap_us):
                if track is not None:
                    row = max(np.searchsorted(track[:, 0], w.t_start + w.length, side="right") - 1, 0)
                    labels = list(track[row, 1:])
                name = f"w{len(manifest):06d}.{'evt' if fmt == 'binary' else 'csv'}"
                path = os.path.join(dest, name)
                write_events(stream.subset(np.arange(w.start, w.stop)), path, fmt)
                manifest.append((path, labels))
        write_manifest(os.path.join(dest, "manifest.txt"), manifest)
        counts[split] = len(manifest)
    if not counts:
        raise ContractError(f"no train/recordings.txt or test/recordings.txt under {in_dir}")
    return counts
