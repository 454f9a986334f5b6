"""YAML training configuration with defaults for everything and strict
rejection of unknown keys."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..amp import AmpConfig, GateConfig
from ..clips import GetupClipConfig, RunClipConfig, WalkClipConfig
from ..ppo import PpoConfig
from ..rewards import RewardWeights
from ..sim import BipedModel


class ConfigError(ValueError):
    """Malformed or unknown configuration content."""


@dataclass(frozen=True)
class DiscConfig:
    hidden: tuple = (128, 128)
    lr: float = 3e-4
    lambda_gp: float = 10.0
    eps: float = 1e-4
    # per-iteration update batch cap, normalized-input noise, and squared
    # logit penalty; together they keep the discriminators from saturating
    # against the tiny reference set (a clamped D ranks nothing)
    batch_size: int = 512
    input_noise: float = 0.1
    logit_reg: float = 0.05


@dataclass(frozen=True)
class ClipsConfig:
    walk: WalkClipConfig = field(default_factory=WalkClipConfig)
    run: RunClipConfig = field(default_factory=RunClipConfig)
    getup: GetupClipConfig = field(default_factory=GetupClipConfig)


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    iterations: int = 2000
    checkpoint_every: int = 200
    single_thread: bool = True
    # fraction of episode resets seeded from getup reference frames so the
    # policy practices the catch at the top of the getup, not just the push
    rsi_prob: float = 0.35
    # trained recipe: more actuation authority than the plant default (getup
    # needs deep knee targets), a wider velocity kernel so standing still is
    # not a gradient desert, suspended cmd/smooth terms while fallen, a slow
    # regularized discriminator, and moderated initial exploration
    model: BipedModel = field(default_factory=lambda: BipedModel(action_scale=1.6))
    rewards: RewardWeights = field(
        default_factory=lambda: RewardWeights(
            sigma_v=0.5, rec_cmd_scale=0.0, rec_smooth_scale=0.0
        )
    )
    amp: AmpConfig = field(default_factory=AmpConfig)
    gate: GateConfig = field(default_factory=GateConfig)
    ppo: PpoConfig = field(default_factory=lambda: PpoConfig(init_std=0.5))
    disc: DiscConfig = field(default_factory=lambda: DiscConfig(lr=1e-4))
    clips: ClipsConfig = field(default_factory=ClipsConfig)


def _build(base, data, path: str):
    """Overlay a mapping onto a default dataclass instance, rejecting unknown
    keys and recursing into dataclass-typed fields. Partial sections keep the
    untouched fields of ``base`` rather than resetting to class defaults."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(base)}
    kwargs = {}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"unknown config key {path + '.' if path else ''}{key}")
        sub = f"{path}.{key}" if path else key
        default = getattr(base, key)
        if dataclasses.is_dataclass(default):
            kwargs[key] = _build(default, value, sub)
        elif isinstance(default, tuple):
            kwargs[key] = tuple(value)
        elif isinstance(default, np.ndarray):
            arr = np.asarray(value, dtype=float)
            if arr.shape != default.shape:
                raise ConfigError(f"{sub}: expected {default.shape[0]} values")
            kwargs[key] = arr
        else:
            kwargs[key] = value
    try:
        return dataclasses.replace(base, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


def load_config(path=None) -> TrainConfig:
    """Load a config file; a missing path or empty file yields all defaults."""
    if path is None:
        return TrainConfig()
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return _build(TrainConfig(), data, "")
