"""BERT-style bidirectional caption encoder."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import TextEncoderConfig
from .layers import Encoder, Linear, Module, encoder_parameter_count, param, trunc_normal

NUM_SEGMENTS = 2


class TextEncoder(Module):
    def __init__(self, cfg: TextEncoderConfig, rng: np.random.Generator, dtype=np.float32):
        if cfg.vocab_size < 1:
            raise ValueError("TextEncoderConfig.vocab_size must be set before building the encoder")
        self.cfg = cfg
        d = cfg.embed_dim
        self.token_embed = param(trunc_normal(rng, (cfg.vocab_size, d), dtype=dtype))
        self.segment_embed = param(trunc_normal(rng, (NUM_SEGMENTS, d), dtype=dtype))
        self.pos_embed = param(trunc_normal(rng, (cfg.max_len, d), dtype=dtype))
        self.encoder = Encoder(d, cfg.depth, cfg.heads, cfg.mlp_ratio, cfg.dropout, rng, dtype)
        self.pooler = Linear(d, d, rng, dtype)
        self.head = Linear(d, cfg.proj_dim, rng, dtype)

    def embed_tokens(self, ids) -> Tensor:
        """Token + segment-0 + position embeddings for (B, T) ids."""
        ids = np.asarray(ids)
        t = ids.shape[-1]
        if t > self.cfg.max_len:
            raise ad.ShapeError(f"sequence length {t} exceeds max_len {self.cfg.max_len}")
        tok = ad.embedding(self.token_embed, ids)
        seg = ad.embedding(self.segment_embed, np.zeros_like(ids))
        return tok + seg + self.pos_embed[:t]

    def encode(self, emb: Tensor, mask, training=False, rng=None, attentions=None) -> Tensor:
        """Masked encoder stack; returns the normalized row at the [CLS] position (B, D)."""
        mask = np.asarray(mask)
        if mask.shape != emb.shape[:2]:
            raise ad.ShapeError(f"mask shape {mask.shape} does not match embeddings {emb.shape[:2]}")
        hidden = self.encoder(emb, mask, training, rng, attentions)
        return hidden[:, 0, :]

    def pool(self, cls_row: Tensor) -> Tensor:
        return ad.tanh(self.pooler(cls_row))

    def project(self, pooled: Tensor) -> Tensor:
        return self.head(pooled)

    def __call__(self, ids, mask, training=False, rng=None, attentions=None) -> Tensor:
        cls = self.encode(self.embed_tokens(ids), mask, training, rng, attentions)
        return self.project(self.pool(cls))


def text_parameter_count(cfg: TextEncoderConfig) -> int:
    d = cfg.embed_dim
    return (
        (cfg.vocab_size + NUM_SEGMENTS + cfg.max_len) * d
        + encoder_parameter_count(d, cfg.depth, cfg.mlp_ratio)
        + d * d + d
        + d * cfg.proj_dim + cfg.proj_dim
    )
