"""Transformer-transformer troll meme classifier built on a small numpy autodiff engine."""

from .autodiff import Tensor
from .config import ModelConfig, RunConfig, TrainConfig, ViTConfig, TextEncoderConfig, FusionConfig
from .fusion import ClassLabel, MemeClassifier

__all__ = [
    "ClassLabel",
    "FusionConfig",
    "MemeClassifier",
    "ModelConfig",
    "RunConfig",
    "Tensor",
    "TextEncoderConfig",
    "TrainConfig",
    "ViTConfig",
]
__version__ = "0.1.0"
