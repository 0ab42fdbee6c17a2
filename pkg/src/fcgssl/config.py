"""Run configuration: a flat ``key = value`` file with dotted keys.

Lines starting with ``#`` are comments. A ``[section]`` line prefixes the
keys that follow with ``section.``. Every key must exist in the schema and
values are coerced to the field's type; lists are comma separated and
``none`` clears an optional value. Example::

    seed = 7
    ablation = none
    [data]
    synthetic = sbm
    block_sizes = 50, 50
    [loss]
    alpha = 0.01
"""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field

from .errors import ConfigError
from .model import EncoderConfig, VARIANTS

ABLATIONS = ("none", "cn", "ce", "cne", "so", "sa", "soa")


@dataclass
class DataConfig:
    path: str = ""                 # empty: generate a synthetic graph
    format: str = ""               # edgelist | bundle | "" (infer from path)
    strict: bool = True
    synthetic: str = "sbm"         # sbm | heterophilous
    block_sizes: tuple = (50, 50)
    p_in: float | None = None
    p_out: float | None = None
    feature_dim: int = 16
    feature_noise: float = 1.0
    seed: int = 7


@dataclass
class SpectralConfig:
    K: int = 0                     # 0: all N eigenpairs
    K_e: int = 50                  # clamped to K
    rbf_count: int = 0             # 0: raw feature dimension
    dense_cutoff: int = 512


@dataclass
class CorruptionConfig:
    r_N: float = 0.3
    r_E: float = 0.3


@dataclass
class LossConfig:
    alpha: float = 0.01
    beta: float = 1e-5
    gamma: float = 2.0
    tau: float = 0.2


@dataclass
class OptimConfig:
    lr: float = 0.001
    epochs: int = 200
    patience: int = 0              # 0: no early stopping


@dataclass
class EvalConfig:
    checkpoint: str = ""
    splits: str = ""               # directory or JSON with train/val/test indices
    repeats: int = 5
    probe_steps: int = 300
    probe_lr: float = 0.01
    pooling: str = "mean"


@dataclass
class SweepConfig:
    alpha: list = field(default_factory=list)
    beta: list = field(default_factory=list)
    r_N: list = field(default_factory=list)
    r_E: list = field(default_factory=list)


@dataclass
class RunConfig:
    seed: int = 0
    ablation: str = "none"
    data: DataConfig = field(default_factory=DataConfig)
    spectral: SpectralConfig = field(default_factory=SpectralConfig)
    corruption: CorruptionConfig = field(default_factory=CorruptionConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    # -- dotted access ---------------------------------------------------------

    def set(self, key, value):
        """Set ``key`` (dotted) from a string or an already-typed value."""
        owner, name, hint = _resolve(self, key)
        setattr(owner, name, _coerce(value, hint, key))
        return self

    def get(self, key):
        owner, name, _ = _resolve(self, key)
        return getattr(owner, name)

    def items(self):
        for key, owner, name in _walk(self, ""):
            yield key, getattr(owner, name)

    def to_dict(self):
        return dict(self.items())

    def to_text(self, prefix=""):
        lines = []
        for key, value in self.items():
            lines.append(f"{prefix}{key} = {_format(value)}\n")
        return "".join(lines)

    def copy(self):
        return parse_config(self.to_text())

    def validate(self):
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        c, lo, o = self.corruption, self.loss, self.optim
        for name in ("r_N", "r_E"):
            v = getattr(c, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"corruption.{name}={v} outside [0, 1]")
        if lo.tau <= 0:
            raise ConfigError(f"loss.tau must be > 0, got {lo.tau}")
        if lo.gamma < 1:
            raise ConfigError(f"loss.gamma must be >= 1, got {lo.gamma}")
        if lo.alpha < 0 or lo.beta < 0:
            raise ConfigError("loss weights must be non-negative")
        if o.epochs < 1:
            raise ConfigError("optim.epochs must be >= 1")
        if o.lr <= 0:
            raise ConfigError("optim.lr must be > 0")
        if self.spectral.K < 0 or self.spectral.K_e < 0:
            raise ConfigError("spectral.K and spectral.K_e must be >= 0")
        if self.eval.repeats < 1:
            raise ConfigError("eval.repeats must be >= 1")
        if self.eval.pooling not in ("sum", "mean"):
            raise ConfigError("eval.pooling must be sum or mean")
        if self.encoder.variant not in VARIANTS:
            raise ConfigError(f"encoder.variant must be one of {VARIANTS}")
        self.encoder.validate()
        return self


def _walk(obj, prefix):
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        key = prefix + f.name
        if dataclasses.is_dataclass(value):
            yield from _walk(value, key + ".")
        else:
            yield key, obj, f.name


def _resolve(cfg, key):
    parts = key.strip().split(".")
    owner = cfg
    for part in parts[:-1]:
        sub = getattr(owner, part, None) if part in _field_names(owner) else None
        if not dataclasses.is_dataclass(sub):
            raise ConfigError(f"unknown config key {key!r}")
        owner = sub
    name = parts[-1]
    if name not in _field_names(owner) or dataclasses.is_dataclass(getattr(owner, name)):
        raise ConfigError(f"unknown config key {key!r}")
    hints = typing.get_type_hints(type(owner))
    return owner, name, hints[name]


def _field_names(obj):
    return {f.name for f in dataclasses.fields(obj)}


def _coerce(value, hint, key):
    args = typing.get_args(hint)
    optional = type(None) in args
    base = next((a for a in args if a is not type(None)), hint) if args else hint
    if not isinstance(value, str):
        if value is None and optional:
            return None
        if base in (tuple, list):
            return base(value)
        try:
            return base(value) if base is not bool else bool(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: cannot use {value!r} as {base.__name__}") from None
    text = value.strip()
    if optional and text.lower() in ("none", ""):
        return None
    try:
        if base is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if base is int:
            return int(text)
        if base is float:
            return float(text)
        if base is str:
            return text
        if base is tuple:
            return tuple(int(t) for t in text.split(",") if t.strip())
        if base is list:
            return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {base.__name__}") from None
    raise ConfigError(f"{key}: unsupported field type {hint!r}")


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ", ".join(_format(v) for v in value)
    return str(value)


def parse_config(text, cfg=None):
    cfg = RunConfig() if cfg is None else cfg
    section = ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            section = section + "." if section else ""
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        try:
            cfg.set(section + key.strip(), value)
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    return cfg


def load_config(path, overrides=()):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    cfg = parse_config(text)
    return apply_overrides(cfg, overrides)


def apply_overrides(cfg, overrides):
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value)
    return cfg
