"""ViT-style image encoder."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import ViTConfig
from .layers import Encoder, Linear, Module, encoder_parameter_count, param, trunc_normal


class ViTEncoder(Module):
    """Patch projection + class token + learned positions -> encoder -> 128-wide head."""

    def __init__(self, cfg: ViTConfig, rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        patch_dim = 3 * cfg.patch_size**2
        d = cfg.embed_dim
        self.patch_proj = Linear(patch_dim, d, rng, dtype)
        self.cls_token = param(trunc_normal(rng, (d,), dtype=dtype))
        self.pos_embed = param(trunc_normal(rng, (cfg.num_patches + 1, d), dtype=dtype))
        self.encoder = Encoder(d, cfg.depth, cfg.heads, cfg.mlp_ratio, cfg.dropout, rng, dtype)
        self.head = Linear(d, cfg.proj_dim, rng, dtype)

    def embed_patches(self, patches) -> Tensor:
        """(B, N, 3P^2) -> (B, N+1, D) with the class token at row 0."""
        patches = patches if isinstance(patches, Tensor) else Tensor(patches, dtype=self.pos_embed.dtype)
        expected = self.patch_proj.weight.shape[0]
        if patches.shape[-1] != expected:
            raise ad.ShapeError(f"patch dimension {patches.shape[-1]} does not match projection input {expected}")
        b, n, _ = patches.shape
        if n + 1 != self.pos_embed.shape[0]:
            raise ad.ShapeError(f"got {n} patches but position table holds {self.pos_embed.shape[0] - 1}")
        proj = self.patch_proj(patches)
        cls = self.cls_token.reshape(1, 1, -1) + np.zeros((b, 1, 1), dtype=proj.dtype)
        tokens = ad.concat([cls, proj], axis=1)
        return tokens + self.pos_embed

    def encode(self, tokens: Tensor, training=False, rng=None, attentions=None) -> Tensor:
        """Encoder stack over all N+1 tokens; returns the normalized class-token row (B, D)."""
        if tokens.shape[-1] != self.cfg.embed_dim:
            raise ad.ShapeError(f"token width {tokens.shape[-1]} != embed_dim {self.cfg.embed_dim}")
        hidden = self.encoder(tokens, None, training, rng, attentions)
        return hidden[:, 0, :]

    def project(self, cls: Tensor) -> Tensor:
        return self.head(cls)

    def __call__(self, patches, training=False, rng=None, attentions=None) -> Tensor:
        return self.project(self.encode(self.embed_patches(patches), training, rng, attentions))


def vit_parameter_count(cfg: ViTConfig) -> int:
    d = cfg.embed_dim
    patch_dim = 3 * cfg.patch_size**2
    return (
        patch_dim * d + d
        + d
        + (cfg.num_patches + 1) * d
        + encoder_parameter_count(d, cfg.depth, cfg.mlp_ratio)
        + d * cfg.proj_dim + cfg.proj_dim
    )
