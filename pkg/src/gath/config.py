"""Run configuration: dataclasses, JSON loading, validation, CLI overrides.

A config file is a JSON object mirroring RunConfig's nesting. Unknown keys
are rejected at every level. CLI flags use dotted paths into the same
structure (e.g. --encoder.dim, --train.lr0) and override file values.
"""

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .errors import ConfigError

MODES = ("full", "joint_only", "decoder_only")
ACTIVATIONS = ("tanh", "leaky_rectifier", "sigmoid")


@dataclass
class EncoderConfig:
    layers: int = 2
    heads: int = 2
    dim: int = 200
    d_k: int = 100
    d_v: int = 100
    dropout_input: float = 0.2
    dropout_output: float = 0.2
    batch_norm: bool = True
    activation: str = "tanh"
    attention_slope: float = 0.2


@dataclass
class DecoderConfig:
    d_w: int = 10
    d_h: int = 20
    channels: int = 32
    kernel_h: int = 3
    kernel_w: int = 3
    dropout: float = 0.2
    batch_norm: bool = True
    entity_bias: bool = False
    activation: str = "tanh"

    @property
    def conv_out_h(self):
        return 3 * self.d_w - self.kernel_h + 1

    @property
    def conv_out_w(self):
        return self.d_h - self.kernel_w + 1

    @property
    def flat_dim(self):
        return self.channels * self.conv_out_h * self.conv_out_w


@dataclass
class TrainConfig:
    lr0: float = 0.01
    lr_decay: float = 0.985
    batch_size: int = 128
    epochs: int = 10
    weight_decay: float = 1e-4
    seed: int = 0
    mode: str = "full"
    label_smoothing: float = 0.0
    patience: int = 0
    checkpoint_every: int = 0


@dataclass
class RunConfig:
    dataset: str = ""
    out: str = "runs/default"
    device: str = "cpu"
    num_entities: int = 0
    num_relations: int = 0
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    @property
    def seed(self):
        return self.train.seed

    @property
    def mode(self):
        return self.train.mode


def _positive(value, name):
    if value <= 0:
        raise ConfigError(f"{name} must be positive, got {value}")


def _rate(value, name):
    if not 0.0 <= value < 1.0:
        raise ConfigError(f"{name} must be in [0, 1), got {value}")


def validate(cfg: RunConfig) -> RunConfig:
    enc, dec, tr = cfg.encoder, cfg.decoder, cfg.train
    if enc.layers < 1:
        raise ConfigError(f"encoder.layers must be >= 1, got {enc.layers}")
    if enc.heads < 1:
        raise ConfigError(f"encoder.heads must be >= 1, got {enc.heads}")
    for name in ("dim", "d_k", "d_v"):
        _positive(getattr(enc, name), f"encoder.{name}")
    _rate(enc.dropout_input, "encoder.dropout_input")
    _rate(enc.dropout_output, "encoder.dropout_output")
    if enc.activation not in ACTIVATIONS:
        raise ConfigError(f"encoder.activation must be one of {ACTIVATIONS}")
    for name in ("d_w", "d_h", "channels", "kernel_h", "kernel_w"):
        _positive(getattr(dec, name), f"decoder.{name}")
    _rate(dec.dropout, "decoder.dropout")
    if dec.activation not in ACTIVATIONS:
        raise ConfigError(f"decoder.activation must be one of {ACTIVATIONS}")
    if dec.d_w * dec.d_h != enc.dim:
        raise ConfigError(
            f"decoder reshape {dec.d_w}x{dec.d_h} != embedding dim {enc.dim}"
        )
    if dec.kernel_h > 3 * dec.d_w or dec.kernel_w > dec.d_h:
        raise ConfigError(
            f"conv kernel {dec.kernel_h}x{dec.kernel_w} larger than "
            f"stacked image {3 * dec.d_w}x{dec.d_h}"
        )
    if tr.lr0 <= 0:
        raise ConfigError(f"train.lr0 must be > 0, got {tr.lr0}")
    if not 0.0 < tr.lr_decay <= 1.0:
        raise ConfigError(f"train.lr_decay must be in (0, 1], got {tr.lr_decay}")
    _positive(tr.batch_size, "train.batch_size")
    if tr.epochs < 0:
        raise ConfigError(f"train.epochs must be >= 0, got {tr.epochs}")
    if tr.weight_decay < 0:
        raise ConfigError("train.weight_decay must be >= 0")
    if tr.mode not in MODES:
        raise ConfigError(f"train.mode must be one of {MODES}, got {tr.mode!r}")
    if cfg.num_entities < 0 or cfg.num_relations < 0:
        raise ConfigError("num_entities/num_relations must be >= 0")
    if cfg.device != "cpu":
        raise ConfigError(f"unsupported device {cfg.device!r}")
    return cfg


_SECTIONS = {"encoder": EncoderConfig, "decoder": DecoderConfig, "train": TrainConfig}


def _fill(cls, data, prefix=""):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in fields:
            raise ConfigError(f"unknown config key {prefix + key!r}")
        f = fields[key]
        if dataclasses.is_dataclass(f.type) or key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"config section {prefix + key!r} must be an object")
            kwargs[key] = _fill(_SECTIONS[key], value, prefix=key + ".")
        else:
            kwargs[key] = _coerce(value, f, prefix + key)
    return cls(**kwargs)


def _coerce(value, f, path):
    target = f.type if isinstance(f.type, type) else {"int": int, "float": float, "str": str, "bool": bool}.get(f.type)
    if target is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"config key {path!r} expects a boolean")
    if target is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"config key {path!r} expects an integer")
        return value
    if target is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key {path!r} expects a number")
        return float(value)
    if target is str:
        if not isinstance(value, str):
            raise ConfigError(f"config key {path!r} expects a string")
        return value
    raise ConfigError(f"config key {path!r} has unsupported type")


def from_dict(data) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return validate(_fill(RunConfig, data))


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in config file {path}: {exc}") from exc
    return from_dict(data)


def to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_json(cfg: RunConfig) -> str:
    """Canonical JSON used for hashing and checkpoint embedding."""
    return json.dumps(to_dict(cfg), sort_keys=True, separators=(",", ":"))


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(config_json(cfg).encode("utf-8")).hexdigest()


def apply_override(cfg: RunConfig, dotted_key, raw_value):
    """Set one dotted config path from a string value (CLI override)."""
    parts = dotted_key.split(".")
    obj = cfg
    for part in parts[:-1]:
        if part not in _SECTIONS or not hasattr(obj, part):
            raise ConfigError(f"unknown config key {dotted_key!r}")
        obj = getattr(obj, part)
    leaf = parts[-1]
    fields = {f.name: f for f in dataclasses.fields(obj)}
    if leaf not in fields or leaf in _SECTIONS:
        raise ConfigError(f"unknown config key {dotted_key!r}")
    f = fields[leaf]
    target = f.type if isinstance(f.type, type) else {"int": int, "float": float, "str": str, "bool": bool}.get(f.type)
    try:
        if target is bool:
            lowered = str(raw_value).lower()
            if lowered in ("true", "1", "yes"):
                value = True
            elif lowered in ("false", "0", "no"):
                value = False
            else:
                raise ValueError(raw_value)
        elif target is int:
            value = int(raw_value)
        elif target is float:
            value = float(raw_value)
        else:
            value = str(raw_value)
    except ValueError as exc:
        raise ConfigError(
            f"cannot parse {raw_value!r} for config key {dotted_key!r}"
        ) from exc
    setattr(obj, leaf, value)
    return cfg
