"""Experiment configuration: dataclasses plus a flat key=value file format.

Config files are plain text, one dotted key per line (e.g. maf.epsilon=0.5,
ablation.modalities=TVA).  CLI flags override file values.  The same
serialization is written back as config.snapshot so every run re-parses
into an equal config.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .errors import ConfigError

MODALITY_CHOICES = ("TVA", "TV", "TA", "VA")
TASK_CHOICES = ("twenty_class", "binary")
POOLER_CHOICES = ("first_token", "mean")


@dataclass
class AblationConfig:
    no_tem: bool = False
    no_maf: bool = False
    no_dual: bool = False
    modalities: str = "TVA"


@dataclass
class ModelConfig:
    d: int = 16
    d_v: int = 16
    d_a: int = 16
    l_s: int = 4
    l_v: int = 6
    l_a: int = 6
    l_r: int = 4
    gamma: float = 0.9
    share_enhance_weight: bool = True
    epsilon: float = 0.5
    maf_dropout: float = 0.1
    head_dropout: float = 0.1
    pooler: str = "first_token"
    use_mask: bool = False
    ln_eps: float = 1e-5
    init_scale: float = 0.05

    def validate(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"tem.gamma must be in [0, 1], got {self.gamma}")
        if self.epsilon < 0:
            raise ConfigError(f"maf.epsilon must be >= 0, got {self.epsilon}")
        if self.l_r != self.l_s:
            # Eq-level requirement: text enhancement adds relation features
            # to text features position-wise.
            raise ConfigError(
                f"relation length l_r={self.l_r} must equal text length "
                f"l_s={self.l_s} for textual enhancement")
        if self.pooler not in POOLER_CHOICES:
            raise ConfigError(f"pooler must be one of {POOLER_CHOICES}")
        for name in ("d", "d_v", "d_a", "l_s", "l_v", "l_a", "l_r"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"dimension {name} must be positive")
        for name in ("maf_dropout", "head_dropout"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {rate}")


@dataclass
class TrainConfig:
    batch_size: int = 16
    eval_batch_size: int = 8
    max_epochs: int = 100
    patience: int = 8
    lr: float = 2e-5
    weight_decay: float = 1e-2
    warmup_fraction: float = 0.1

    def validate(self):
        for name in ("batch_size", "eval_batch_size"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.max_epochs < 0:
            raise ConfigError("max_epochs must be >= 0")
        if self.patience <= 0 or (self.max_epochs and
                                  self.patience > self.max_epochs):
            raise ConfigError("patience must be in [1, max_epochs]")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ConfigError("warmup_fraction must be in [0, 1)")


@dataclass
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    task: str = "twenty_class"
    bundle: str = ""
    knowledge: str = ""
    out: str = ""
    seed: int = 0

    def validate(self):
        self.model.validate()
        self.train.validate()
        if self.task not in TASK_CHOICES:
            raise ConfigError(f"task must be one of {TASK_CHOICES}")
        if self.ablation.modalities not in MODALITY_CHOICES:
            raise ConfigError(
                f"ablation.modalities must be one of {MODALITY_CHOICES}")
        if self.ablation.modalities == "VA" and not self.ablation.no_tem:
            # no text stream means nothing to enhance
            raise ConfigError(
                "ablation.modalities=VA requires ablation.no_tem=true")
        return self


# key path -> (object attr path, type)
_KEY_MAP = {
    "dims.d": ("model.d", int),
    "dims.d_v": ("model.d_v", int),
    "dims.d_a": ("model.d_a", int),
    "lengths.l_s": ("model.l_s", int),
    "lengths.l_v": ("model.l_v", int),
    "lengths.l_a": ("model.l_a", int),
    "lengths.l_r": ("model.l_r", int),
    "tem.gamma": ("model.gamma", float),
    "tem.share_enhance_weight": ("model.share_enhance_weight", bool),
    "maf.epsilon": ("model.epsilon", float),
    "maf.dropout": ("model.maf_dropout", float),
    "head.dropout": ("model.head_dropout", float),
    "head.pooler": ("model.pooler", str),
    "model.use_mask": ("model.use_mask", bool),
    "model.ln_eps": ("model.ln_eps", float),
    "model.init_scale": ("model.init_scale", float),
    "ablation.no_tem": ("ablation.no_tem", bool),
    "ablation.no_maf": ("ablation.no_maf", bool),
    "ablation.no_dual": ("ablation.no_dual", bool),
    "ablation.modalities": ("ablation.modalities", str),
    "train.batch_size": ("train.batch_size", int),
    "train.eval_batch_size": ("train.eval_batch_size", int),
    "train.max_epochs": ("train.max_epochs", int),
    "train.patience": ("train.patience", int),
    "train.lr": ("train.lr", float),
    "train.weight_decay": ("train.weight_decay", float),
    "train.warmup_fraction": ("train.warmup_fraction", float),
    "task": ("task", str),
    "paths.bundle": ("bundle", str),
    "paths.knowledge": ("knowledge", str),
    "paths.out": ("out", str),
    "seed": ("seed", int),
}


def _parse_value(raw: str, typ):
    raw = raw.strip()
    if typ is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    try:
        return typ(raw)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {raw!r} as {typ.__name__}") from exc


def apply_key(config: ExperimentConfig, key: str, raw_value: str):
    if key not in _KEY_MAP:
        raise ConfigError(f"unknown config key: {key}")
    attr_path, typ = _KEY_MAP[key]
    value = _parse_value(str(raw_value), typ)
    obj = config
    *head, last = attr_path.split(".")
    for part in head:
        obj = getattr(obj, part)
    setattr(obj, last, value)


def parse_config_text(text: str,
                      base: ExperimentConfig | None = None) -> ExperimentConfig:
    config = base if base is not None else ExperimentConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, raw = line.partition("=")
        apply_key(config, key.strip(), raw)
    return config


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text, base)


def dump_config(config: ExperimentConfig) -> str:
    """Serialize to the same flat format; round-trips to an equal config."""
    lines = []
    for key, (attr_path, typ) in _KEY_MAP.items():
        obj = config
        for part in attr_path.split("."):
            obj = getattr(obj, part)
        if typ is bool:
            lines.append(f"{key}={'true' if obj else 'false'}")
        elif typ is float:
            lines.append(f"{key}={obj!r}")
        else:
            lines.append(f"{key}={obj}")
    return "\n".join(lines) + "\n"


def config_equal(a: ExperimentConfig, b: ExperimentConfig) -> bool:
    return dataclasses.asdict(a) == dataclasses.asdict(b)
