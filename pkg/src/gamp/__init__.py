"""Gated adversarial motion priors on a planar biped."""

from .harness.config import TrainConfig, load_config
from .harness.evaluate import evaluate, rollout_frozen
from .harness.frozen import FrozenPolicy, load_frozen, write_frozen
from .harness.train import train
from .sim.model import BipedModel

__version__ = "0.1.0"

__all__ = [
    "BipedModel",
    "FrozenPolicy",
    "TrainConfig",
    "evaluate",
    "load_config",
    "load_frozen",
    "rollout_frozen",
    "train",
    "write_frozen",
    "__version__",
]
