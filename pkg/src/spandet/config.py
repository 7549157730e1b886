"""Model/run configuration and its flat key=value text format.

Every field of the nested config dataclasses maps to one flat key, which is
also the format checkpoints embed and the CLI reads.  Lines are
``key = value``; blank lines and ``#`` comments are ignored; unknown keys
are errors.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from spandet.loss import LossConfig


@dataclass
class EncoderConfig:
    d_model: int = 512
    n_mha_layers: int = 3
    n_accn_layers: int = 3
    heads: int = 8
    rd: float = 0.25          # inner-width reduction of the conv blocks
    accn_kernel: int = 3
    n_phases: int = 3
    dropout: float = 0.1

    def validate(self):
        if self.d_model < 1 or self.heads < 1:
            raise ValueError("d_model and heads must be positive")
        if self.d_model % self.heads != 0:
            raise ValueError(
                f"d_model {self.d_model} must be divisible by heads {self.heads}")
        inner = self.d_model * self.rd
        if inner != int(inner) or int(inner) < 1:
            raise ValueError(
                f"d_model * rd must be a positive integer, got {inner}")
        if self.accn_kernel % 2 == 0 or self.accn_kernel < 1:
            raise ValueError(f"accn_kernel must be odd, got {self.accn_kernel}")
        if self.n_mha_layers < 1 or self.n_accn_layers < 0 or self.n_phases < 1:
            raise ValueError("layer counts out of range")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")


RESERVED_CLASS_NAMES = {"O", "<none>"}


@dataclass
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    classes: tuple = ()
    d_w: int = 128
    d_p: int = 128
    vectors: str = ""          # path to pretrained word vectors; empty = fallback
    lr: float = 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 64
    lr_decay: float = 0.1
    lr_decay_every: int = 100
    max_epochs: int = 1000
    seed: int = 0
    threshold: float = 0.5
    eval_every: int = 5
    dtype: str = "float32"
    tag_column: int = -1
    filter_single_class: bool = True
    filter_full_cover: bool = True
    use_pattern_embedding: bool = True
    use_accn: bool = True
    head_relu: bool = True

    def validate(self):
        self.encoder.validate()
        self.loss.validate()
        if not self.classes:
            raise ValueError("the entity class list must not be empty")
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("duplicate entity class names")
        bad = RESERVED_CLASS_NAMES.intersection(self.classes)
        if bad:
            raise ValueError(f"class names {bad} are reserved for non-entity")
        if self.lr <= 0 or self.lr_decay <= 0:
            raise ValueError("learning rate and decay factor must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be nonnegative")
        if self.batch_size < 1 or self.max_epochs < 1 or self.eval_every < 1:
            raise ValueError("batch_size, max_epochs and eval_every must be >= 1")
        if self.lr_decay_every < 1:
            raise ValueError("lr_decay_every must be >= 1")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in [0, 1], got {self.threshold}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype}")
        if self.d_w < 1 or self.d_p < 1:
            raise ValueError("embedding widths must be positive")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @classmethod
    def desk_scale(cls, classes, **overrides) -> "ModelConfig":
        """Small defaults that train in minutes on one CPU core."""
        enc = EncoderConfig(d_model=64, n_mha_layers=2, n_accn_layers=2,
                            heads=4, rd=0.25, accn_kernel=3, n_phases=3,
                            dropout=0.1)
        cfg = cls(encoder=enc, classes=tuple(classes), d_w=32, d_p=16,
                  lr=1e-3, batch_size=8, max_epochs=200, eval_every=5)
        for key, value in overrides.items():
            if hasattr(cfg.encoder, key):
                setattr(cfg.encoder, key, value)
            elif hasattr(cfg.loss, key):
                setattr(cfg.loss, key, value)
            elif hasattr(cfg, key):
                setattr(cfg, key, value)
            else:
                raise TypeError(f"unknown config field {key!r}")
        cfg.validate()
        return cfg


# ----- flat key=value text form ------------------------------------------------


def _owners(cfg: ModelConfig):
    return {"encoder": cfg.encoder, "loss": cfg.loss, "": cfg}


def _field_map():
    """flat key -> (owner name, field type)."""
    table = {}
    for owner, cls in (("encoder", EncoderConfig), ("loss", LossConfig),
                       ("", ModelConfig)):
        for f in fields(cls):
            if f.name in ("encoder", "loss"):
                continue
            table[f.name] = (owner, f.type)
    return table


_FIELDS = _field_map()


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(value)
    return repr(value) if isinstance(value, float) else str(value)


def _parse_value(key: str, text: str):
    owner, ftype = _FIELDS[key]
    text = text.strip()
    if ftype in ("int", int):
        return int(text)
    if ftype in ("float", float):
        return float(text)
    if ftype in ("bool", bool):
        low = text.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"config key {key}: {text!r} is not a boolean")
    if ftype in ("tuple", tuple):
        return tuple(v.strip() for v in text.split(",") if v.strip())
    return text


def dump_config(cfg: ModelConfig) -> str:
    owners = _owners(cfg)
    lines = []
    for key, (owner, _) in _FIELDS.items():
        lines.append(f"{key} = {_format_value(getattr(owners[owner], key))}")
    return "\n".join(lines) + "\n"


def parse_config(text: str, base: ModelConfig | None = None) -> ModelConfig:
    cfg = base or ModelConfig()
    owners = _owners(cfg)
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"config line {line_no}: expected key = value")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELDS:
            raise ValueError(f"config line {line_no}: unknown key {key!r}")
        owner, _ = _FIELDS[key]
        setattr(owners[owner], key, _parse_value(key, raw))
    cfg.validate()
    return cfg


def load_config(path) -> ModelConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
