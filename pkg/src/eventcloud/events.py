"""Event recordings: file formats, sliding windows, denoising, sampling.

A stream is held column-wise (``t``, ``x``, ``y``, ``p`` arrays) sorted by
timestamp. A window of a stream becomes a :class:`PointSample` of ``N`` rows
``(x/w, y/h, t_norm)`` ordered by time.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ContractError, ParseError, ValidationError

BIN_MAGIC = b"EVTB"
BIN_VERSION = 1
_HEADER = struct.Struct("<4sIIIQ")
RECORD = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1"), ("pad", "u1")])


@dataclass
class EventStream:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        self.t = np.ascontiguousarray(self.t, dtype=np.uint64)
        self.x = np.ascontiguousarray(self.x, dtype=np.uint16)
        self.y = np.ascontiguousarray(self.y, dtype=np.uint16)
        self.p = np.ascontiguousarray(self.p, dtype=np.uint8)
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise ContractError("event columns differ in length")

    def __len__(self):
        return len(self.t)

    def subset(self, idx):
        return EventStream(self.t[idx], self.x[idx], self.y[idx], self.p[idx],
                           self.width, self.height)

    def equals(self, other):
        return (self.width == other.width and self.height == other.height
                and all(np.array_equal(getattr(self, c), getattr(other, c)) for c in "txyp"))

    @classmethod
    def empty(cls, width, height):
        return cls(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0), width, height)


def make_stream(t, x, y, p, width, height):
    """Validate and sort raw columns into an :class:`EventStream`.

    Equal timestamps are ordered by ``(x, y, p)`` and then by input position,
    so any permutation of the same records gives the same stream.
    """
    t = np.asarray(t)
    x = np.asarray(x)
    y = np.asarray(y)
    p = np.asarray(p)
    if width <= 0 or height <= 0:
        raise ValidationError(f"sensor size must be positive, got {width}x{height}")
    if len(t):
        if np.any(t < 0):
            raise ValidationError("negative timestamp")
        bad = np.flatnonzero((x < 0) | (x >= width) | (y < 0) | (y >= height))
        if len(bad):
            i = bad[0]
            raise ValidationError(
                f"event {i} at ({x[i]}, {y[i]}) outside {width}x{height} sensor")
        bad = np.flatnonzero((p != 0) & (p != 1))
        if len(bad):
            raise ValidationError(f"event {bad[0]} has polarity {p[bad[0]]}, expected 0 or 1")
    order = np.lexsort((np.arange(len(t)), p, y, x, t))
    return EventStream(t[order], x[order], y[order], p[order], width, height)


def detect_format(path):
    with open(path, "rb") as fh:
        head = fh.read(4)
    return "binary" if head == BIN_MAGIC else "csv"


def _parse_csv(path):
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 fields t_us,x,y,p, got {len(parts)}")
            try:
                rows.append([int(v) for v in parts])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-integer field in {line!r}") from None
    return np.array(rows, dtype=np.int64).reshape(-1, 4)


def load_events(path, fmt=None, width=None, height=None):
    """Read a CSV or binary recording.

    Binary files carry their sensor size; CSV files need ``width`` and
    ``height``. ``fmt`` is detected from the file magic when omitted.
    """
    fmt = fmt or detect_format(path)
    if fmt == "binary":
        with open(path, "rb") as fh:
            blob = fh.read()
        if len(blob) < _HEADER.size:
            raise ParseError(f"{path}: truncated header ({len(blob)} bytes)")
        magic, version, w, h, count = _HEADER.unpack_from(blob)
        if magic != BIN_MAGIC:
            raise ParseError(f"{path}: bad magic {magic!r}")
        if version != BIN_VERSION:
            raise ParseError(f"{path}: unsupported version {version}")
        need = _HEADER.size + count * RECORD.itemsize
        if len(blob) != need:
            raise ParseError(f"{path}: expected {need} bytes for {count} events, found {len(blob)}")
        rec = np.frombuffer(blob, dtype=RECORD, count=count, offset=_HEADER.size)
        if width is not None and (width, height) != (w, h):
            raise ValidationError(f"{path}: sensor {w}x{h} does not match requested {width}x{height}")
        return make_stream(rec["t"], rec["x"].astype(np.int64), rec["y"].astype(np.int64),
                           rec["p"], w, h)
    if fmt != "csv":
        raise ParseError(f"unknown event format {fmt!r}")
    if width is None or height is None:
        raise ContractError("CSV recordings need width and height")
    a = _parse_csv(path)
    return make_stream(a[:, 0], a[:, 1], a[:, 2], a[:, 3], width, height)


def write_events(stream, path, fmt="binary"):
    if fmt == "binary":
        rec = np.zeros(len(stream), dtype=RECORD)
        rec["t"], rec["x"], rec["y"], rec["p"] = stream.t, stream.x, stream.y, stream.p
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(BIN_MAGIC, BIN_VERSION, stream.width, stream.height, len(stream)))
            fh.write(rec.tobytes())
    elif fmt == "csv":
        a = np.stack([stream.t.astype(np.int64), stream.x, stream.y, stream.p], axis=1)
        with open(path, "w", encoding="ascii") as fh:
            fh.write(f"# t_us,x,y,p width={stream.width} height={stream.height}\n")
            np.savetxt(fh, a, fmt="%d", delimiter=",")
    else:
        raise ContractError(f"unknown event format {fmt!r}")


# ---------------------------------------------------------------- windows

@dataclass(frozen=True)
class Window:
    start: int  # first event index
    stop: int  # one past the last event index
    t_start: int
    length: int  # R in microseconds
    index: int

    @property
    def count(self):
        return self.stop - self.start


def slide_windows(stream, R, overlap):
    """Half-open windows ``[t0 + i*(R-overlap), ... + R)`` aligned to the first event.

    Empty windows are skipped; the remaining ones keep their position
    ``index`` in the full sequence.
    """
    R, overlap = int(R), int(overlap)
    if not 0 <= overlap < R:
        raise ContractError(f"need 0 <= overlap < R, got R={R}, overlap={overlap}")
    if len(stream) == 0:
        return []
    t = stream.t.astype(np.int64)
    stride = R - overlap
    t0 = int(t[0])
    n = (int(t[-1]) - t0) // stride + 1
    starts = t0 + stride * np.arange(n, dtype=np.int64)
    lo = np.searchsorted(t, starts, side="left")
    hi = np.searchsorted(t, starts + R, side="left")
    return [Window(int(a), int(b), int(s), R, i)
            for i, (a, b, s) in enumerate(zip(lo, hi, starts)) if b > a]


def denoise(stream, radius=2, dt=5000, min_neighbors=2):
    """Drop events with fewer than ``min_neighbors`` others within
    Chebyshev distance ``radius`` pixels and ``dt`` microseconds."""
    if radius < 0 or dt < 0 or min_neighbors < 0:
        raise ContractError("denoise parameters must be non-negative")
    if len(stream) == 0:
        return stream
    keep = kernels.denoise_mask(stream.t.astype(np.int64), stream.x.astype(np.int64),
                                stream.y.astype(np.int64), int(radius), int(dt),
                                int(min_neighbors))
    return stream.subset(np.flatnonzero(keep))


def downsample(count, N, seed):
    """Pick ``N`` of ``count`` window positions, returned in ascending order.

    Events inside a window are time sorted, so ascending position is the
    ``(t, index)`` order.
    """
    if count <= 0:
        raise ContractError("cannot sample from an empty window")
    if N <= 0:
        raise ContractError("N must be positive")
    rng = np.random.default_rng(seed)
    if count == N:
        return np.arange(N, dtype=np.int64)
    idx = rng.choice(count, size=N, replace=count < N)
    return np.sort(idx).astype(np.int64)


@dataclass
class PointSample:
    coords: np.ndarray  # N x 3 float32 in [0, 1]
    window_id: int = 0
    label: np.ndarray | None = None
    degenerate: bool = False


def normalize(t, x, y, width, height, window_id=0, label=None):
    """Map sampled events to ``(x/w, y/h, (t - tmin)/(tmax - tmin))``."""
    t = np.asarray(t, dtype=np.int64)
    lo, hi = int(t.min()), int(t.max())
    degenerate = hi == lo
    tn = np.zeros(len(t)) if degenerate else (t - lo) / (hi - lo)
    coords = np.stack([np.asarray(x, np.float64) / width,
                       np.asarray(y, np.float64) / height, tn], axis=1)
    return PointSample(coords.astype(np.float32), window_id, label, degenerate)


def window_sample(stream, window, N, seed, label=None):
    """Downsample and normalise one window (or a whole stream when ``window`` is None)."""
    start, stop, wid = (0, len(stream), 0) if window is None else (window.start, window.stop, window.index)
    pick = start + downsample(stop - start, N, seed)
    return normalize(stream.t[pick], stream.x[pick], stream.y[pick],
                     stream.width, stream.height, wid, label)


# ---------------------------------------------------------------- datasets

TASKS = ("classify", "cpr", "eye")


@dataclass
class DatasetSpec:
    task: str = "classify"
    window_us: int = 500_000
    overlap_us: int = 250_000
    n_points: int = 1024
    label_width: int = 1
    denoise: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ContractError(f"task must be one of {TASKS}, got {self.task!r}")
        if not 0 <= self.overlap_us < self.window_us:
            raise ContractError("need 0 <= overlap < window length")
        if self.n_points <= 0:
            raise ContractError("n_points must be positive")


def read_manifest(path):
    """Parse ``path,label...`` lines; relative paths resolve against the manifest."""
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            try:
                labels = [float(v) for v in parts[1:]]
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric label") from None
            entries.append((os.path.join(base, parts[0]), labels))
    return entries


def write_manifest(path, entries):
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "w", encoding="ascii") as fh:
        for p, labels in entries:
            rel = os.path.relpath(p, base)
            fh.write(",".join([rel] + [repr(float(v)) if not float(v).is_integer() else str(int(v))
                                       for v in labels]) + "\n")
