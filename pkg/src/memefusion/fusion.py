"""Fusion head, the full two-encoder classifier, loss, and thresholding."""
from __future__ import annotations

import math
from enum import IntEnum

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import FusionConfig, ModelConfig
from .image import patchify
from .layers import Linear, Module
from .text_encoder import TextEncoder, text_parameter_count
from .vit import ViTEncoder, vit_parameter_count


class ClassLabel(IntEnum):
    NONTROLL = 0
    TROLL = 1

    @property
    def display(self) -> str:
        return "Troll" if self is ClassLabel.TROLL else "Non-Troll"

    @property
    def slug(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str) -> "ClassLabel":
        key = text.strip().lower().replace("-", "").replace("_", "").replace(" ", "")
        for label in cls:
            if label.slug == key:
                return label
        raise ValueError(f"unknown label {text!r}; expected 'troll' or 'nontroll'")


class FusionHead(Module):
    """concat(image, text) -> ReLU -> dropout -> one logit."""

    def __init__(self, cfg: FusionConfig, rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        self.out = Linear(cfg.fused_dim, 1, rng, dtype)

    def __call__(self, img: Tensor, txt: Tensor, training=False, rng=None) -> Tensor:
        if img.shape[-1] != self.cfg.image_dim or txt.shape[-1] != self.cfg.text_dim:
            raise ad.ShapeError(
                f"fusion expects widths {self.cfg.image_dim}+{self.cfg.text_dim}, got {img.shape[-1]}+{txt.shape[-1]}"
            )
        if self.cfg.modality == "text":
            img = img * 0.0
        elif self.cfg.modality == "image":
            txt = txt * 0.0
        fused = ad.relu(ad.concat([img, txt], axis=-1))
        fused = ad.dropout(fused, self.cfg.dropout, training, rng)
        return self.out(fused).reshape(-1)


class MemeClassifier(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        self.vit = ViTEncoder(cfg.vit, rng, dtype)
        self.text = TextEncoder(cfg.text, rng, dtype)
        self.fusion = FusionHead(cfg.fusion, rng, dtype)

    @property
    def dtype(self):
        return self.vit.pos_embed.dtype

    def __call__(self, images, ids, mask, training=False, rng=None, attentions=None) -> Tensor:
        """Raw logits (B,) for channels-first images (B, 3, H, W) and encoded captions."""
        patches = patchify(np.asarray(images, dtype=self.dtype), self.cfg.vit.patch_size)
        img = self.vit(patches, training, rng, attentions)
        txt = self.text(ids, mask, training, rng, attentions)
        return self.fusion(img, txt, training, rng)


def model_parameter_count(cfg: ModelConfig) -> int:
    return vit_parameter_count(cfg.vit) + text_parameter_count(cfg.text) + cfg.fusion.fused_dim + 1


def bce_loss(logit, label) -> Tensor:
    """Stable binary cross-entropy on logits, averaged over the batch."""
    logit = logit if isinstance(logit, Tensor) else Tensor(np.asarray(logit, dtype=np.float64))
    return ad.bce_with_logits(logit, np.asarray(label, dtype=np.float64))


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def predict(logit: float, threshold: float = 0.5) -> ClassLabel:
    return ClassLabel.TROLL if sigmoid(float(logit)) >= threshold else ClassLabel.NONTROLL


def predict_batch(logits: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    return np.array([int(predict(z, threshold)) for z in np.asarray(logits).ravel()], dtype=np.int64)
