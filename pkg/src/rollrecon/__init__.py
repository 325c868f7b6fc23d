"""Unrolled multi-scale state-space reconstruction for accelerated MRI and sparse-view CT."""

from .errors import ConfigError, DivergenceError, ShapeError, StateError
from .model import ModelConfig, init_weights, network_forward, reconstruct
from .train import TrainConfig, load_checkpoint, save_checkpoint, total_loss, train_loop

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DivergenceError", "ModelConfig", "ShapeError", "StateError", "TrainConfig",
    "init_weights", "load_checkpoint", "network_forward", "reconstruct", "save_checkpoint",
    "total_loss", "train_loop",
]
