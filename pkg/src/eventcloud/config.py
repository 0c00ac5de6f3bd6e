"""Configuration records and the flat ``key = value`` file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields

from .errors import ConfigError

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


@dataclass
class ModelConfig:
    task: str = "classify"
    n_points: int = 1024
    centroids: list = field(default_factory=lambda: [512, 256, 128])
    dims: list = field(default_factory=lambda: [32, 64, 128])
    k: int = 24
    classes: int = 10
    head_hidden: int = 256
    ssm_state: int = 16
    ssm_expand: int = 2
    conv_width: int = 4
    res_expansion: float = 0.5
    coord_feats: bool = True
    aggregate: str = "attention"
    seed: int = 0

    @property
    def out_dim(self):
        return {"classify": self.classes, "cpr": 6, "eye": 2}[self.task]

    def validate(self):
        bad = []
        if self.task not in ("classify", "cpr", "eye"):
            bad.append(f"task={self.task!r} (classify|cpr|eye)")
        if len(self.centroids) != 3:
            bad.append(f"centroids needs 3 entries, got {len(self.centroids)}")
        if len(self.dims) != 3:
            bad.append(f"dims needs 3 entries, got {len(self.dims)}")
        if self.n_points <= 0:
            bad.append("n_points must be positive")
        if self.centroids and self.centroids[0] > self.n_points:
            bad.append("first centroid count exceeds n_points")
        for a, b in zip(self.centroids, self.centroids[1:]):
            if a != 2 * b:
                bad.append(f"centroids must halve stage to stage, got {self.centroids}")
                break
        if any(c <= 0 for c in self.centroids):
            bad.append("centroid counts must be positive")
        if any(d <= 0 for d in self.dims) or any(a > b for a, b in zip(self.dims, self.dims[1:])):
            bad.append(f"dims must be positive and non-decreasing, got {self.dims}")
        inputs = [self.n_points] + list(self.centroids[:-1])
        if self.k < 1 or any(self.k > t for t in inputs):
            bad.append(f"k={self.k} must be in [1, smallest stage input]")
        if self.task == "classify" and self.classes < 2:
            bad.append("classes must be at least 2")
        for name in ("head_hidden", "ssm_state", "ssm_expand", "conv_width"):
            if getattr(self, name) < 1:
                bad.append(f"{name} must be positive")
        if not self.res_expansion > 0:
            bad.append("res_expansion must be positive")
        if self.aggregate not in ("attention", "max"):
            bad.append(f"aggregate={self.aggregate!r} (attention|max)")
        if bad:
            raise ConfigError("invalid model config: " + "; ".join(bad))
        return self

    def canonical_text(self):
        # the seed only affects initial values, not the parameter layout
        return "".join(f"{k} = {_fmt(getattr(self, k))}\n"
                       for k in sorted(_names(ModelConfig)) if k != "seed")

    def digest(self):
        return fnv1a64(self.canonical_text().encode("ascii"))


@dataclass
class LossConfig:
    label_smoothing: float = 0.1
    alpha: float = 1.0
    beta: float = 1.0
    lam: float = 1e-5
    w_x: float = 1.0
    w_y: float = 1.0

    def validate(self):
        if not 0 <= self.label_smoothing < 1:
            raise ConfigError("label_smoothing must be in [0, 1)")
        for name in ("alpha", "beta", "lam", "w_x", "w_y"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        return self


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    batch_size: int = 32
    epochs: int = 350
    lr: float = 1e-3
    seed: int = 0
    width: int = 128
    height: int = 128
    window_us: int = 500_000
    overlap_us: int = 250_000
    denoise: bool = False
    permute_time: bool = False
    freeze_bn_after: int = 0
    resample: bool = False

    def validate(self):
        self.model.validate()
        self.loss.validate()
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if self.freeze_bn_after < 0:
            raise ConfigError("freeze_bn_after must be non-negative")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if not 0 <= self.overlap_us < self.window_us:
            raise ConfigError("need 0 <= overlap_us < window_us")
        return self


def _names(cls):
    return [f.name for f in fields(cls)]


_MODEL_KEYS = set(_names(ModelConfig)) - {"seed"}
_LOSS_KEYS = set(_names(LossConfig))
_RUN_KEYS = set(_names(RunConfig)) - {"model", "loss"}


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(name, raw, current):
    try:
        if isinstance(current, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(current, list):
            return [int(x) for x in raw.replace("[", "").replace("]", "").split(",") if x.strip()]
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def parse_config(text, base=None):
    """Build a :class:`RunConfig` from ``key = value`` lines; ``#`` starts a comment."""
    cfg = dataclasses.replace(base) if base else RunConfig()
    cfg.model = dataclasses.replace(cfg.model)
    cfg.loss = dataclasses.replace(cfg.loss)
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        set_value(cfg, key, raw, lineno)
    cfg.model.seed = cfg.seed
    return cfg.validate()


def set_value(cfg, key, raw, lineno=None):
    where = f"line {lineno}: " if lineno else ""
    if key in _MODEL_KEYS:
        target = cfg.model
    elif key in _LOSS_KEYS:
        target = cfg.loss
    elif key in _RUN_KEYS:
        target = cfg
    else:
        raise ConfigError(f"{where}unknown key {key!r}")
    setattr(target, key, _coerce(key, raw, getattr(target, key)))


def load_config(path):
    with open(path, "r", encoding="ascii") as fh:
        return parse_config(fh.read())


def dump_config(cfg):
    lines = [f"{k} = {_fmt(getattr(cfg.model, k))}" for k in sorted(_MODEL_KEYS)]
    lines += [f"{k} = {_fmt(getattr(cfg.loss, k))}" for k in sorted(_LOSS_KEYS)]
    lines += [f"{k} = {_fmt(getattr(cfg, k))}" for k in sorted(_RUN_KEYS)]
    return "\n".join(lines) + "\n"
