"""Run configuration: nested blocks, strict validation, stable hashing.

A config file is a JSON document with up to five blocks (channel, model,
train, eval, paths); every field is optional and missing ones take the
defaults below, which reproduce the standard operating point (5000 km,
gamma 1.27, noise -21.3 dBm, 50 segments, M=16).  Unknown blocks or keys
are rejected so typos cannot silently change an experiment.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields

from fiberae.channel import ChannelParams, watts_from_dbm

__all__ = [
    "ChannelBlock",
    "ModelBlock",
    "TrainBlock",
    "EvalBlock",
    "PathsBlock",
    "RunConfig",
    "ConfigError",
    "load_config",
    "resolved_json",
    "config_hash",
]


class ConfigError(ValueError):
    """Raised for unreadable, unknown-key, or invalid-value configs."""


@dataclass
class ChannelBlock:
    link_length_km: float = 5000.0
    gamma: float = 1.27
    noise_power_dbm: float = -21.3
    segments: int = 50
    seed: int = 1

    def params(self) -> ChannelParams:
        return ChannelParams(
            link_length_km=self.link_length_km,
            gamma=self.gamma,
            noise_power_w=watts_from_dbm(self.noise_power_dbm),
            segments=self.segments,
            seed=self.seed,
        )


@dataclass
class ModelBlock:
    m: int = 16
    tx_hidden_layers: int = 5
    rx_hidden_layers: int = 6
    hidden_width: int | None = None
    init_seed: int = 7


@dataclass
class TrainBlock:
    learning_rate: float = 1e-3
    batch_size: int | None = None  # defaults to 64 * m
    batches: int = 10_000
    seed: int = 100


@dataclass
class EvalBlock:
    n_samples: int = 100_000
    oracle_samples: int = 100_000
    seed: int = 200
    raster_resolution: int = 200
    raster_half_width: float | None = None  # defaults to 3 * sqrt(P_in)


@dataclass
class PathsBlock:
    checkpoints: str = "out"
    outputs: str = "out"


@dataclass
class RunConfig:
    channel: ChannelBlock = field(default_factory=ChannelBlock)
    model: ModelBlock = field(default_factory=ModelBlock)
    train: TrainBlock = field(default_factory=TrainBlock)
    eval: EvalBlock = field(default_factory=EvalBlock)
    paths: PathsBlock = field(default_factory=PathsBlock)

    def batch_size(self) -> int:
        return self.train.batch_size if self.train.batch_size is not None else 64 * self.model.m

    def validate(self) -> "RunConfig":
        ch = self.channel
        if ch.link_length_km <= 0 or ch.gamma < 0 or ch.segments < 1:
            raise ConfigError("invalid channel block")
        if self.model.m < 2:
            raise ConfigError("model.m must be at least 2")
        if self.model.tx_hidden_layers < 0 or self.model.rx_hidden_layers < 0:
            raise ConfigError("hidden layer counts must be nonnegative")
        if self.model.hidden_width is not None and self.model.hidden_width < 1:
            raise ConfigError("model.hidden_width must be positive")
        if self.train.learning_rate < 0 or self.train.batches < 1:
            raise ConfigError("invalid train block")
        if self.batch_size() % self.model.m != 0:
            raise ConfigError("train.batch_size must be a multiple of model.m")
        if self.eval.n_samples < 1 or self.eval.oracle_samples < 1000:
            raise ConfigError("invalid eval block")
        if self.eval.raster_resolution < 16:
            raise ConfigError("eval.raster_resolution must be at least 16")
        return self


_BLOCKS = {
    "channel": ChannelBlock,
    "model": ModelBlock,
    "train": TrainBlock,
    "eval": EvalBlock,
    "paths": PathsBlock,
}


def _build_block(cls, data: dict, name: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {name} block: {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"bad {name} block: {exc}") from exc


def load_config(path=None) -> RunConfig:
    """Read and validate a config file; None gives the full defaults."""
    if path is None:
        return RunConfig().validate()
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object of blocks")
    unknown = set(doc) - set(_BLOCKS)
    if unknown:
        raise ConfigError(f"unknown config block(s): {sorted(unknown)}")
    kwargs = {}
    for name, cls in _BLOCKS.items():
        block = doc.get(name, {})
        if not isinstance(block, dict):
            raise ConfigError(f"config block {name!r} must be an object")
        kwargs[name] = _build_block(cls, block, name)
    return RunConfig(**kwargs).validate()


def resolved_json(config: RunConfig) -> str:
    """Canonical JSON of the fully resolved config (defaults applied)."""
    from dataclasses import asdict

    return json.dumps(asdict(config), sort_keys=True, indent=1) + "\n"


def config_hash(config: RunConfig) -> str:
    from dataclasses import asdict

    canonical = json.dumps(asdict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]
