"""Seeded mini-batch training loop and batched evaluation."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .config import ModelConfig, TrainConfig
from .data import PreparedSplit
from .errors import InputError
from .fusion import MemeClassifier, predict_batch
from .metrics import ClassificationReport, confusion, report
from .optim import AdamW, lr_at

log = logging.getLogger(__name__)


@dataclass
class TrainResult:
    model: MemeClassifier
    history: list[dict] = field(default_factory=list)
    epoch_reports: list[ClassificationReport] = field(default_factory=list)
    total_steps: int = 0


def seed_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Independent generators for (weight init, shuffling, dropout) from one seed."""
    init, shuffle, drop = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(init), np.random.default_rng(shuffle), np.random.default_rng(drop)


def build_model(cfg: ModelConfig, seed: int, dtype=np.float32) -> MemeClassifier:
    init_rng, _, _ = seed_streams(seed)
    return MemeClassifier(cfg, init_rng, dtype)


def total_steps(n: int, cfg: TrainConfig) -> int:
    return math.ceil(n / cfg.batch_size) * cfg.epochs


def predict_logits(model: MemeClassifier, split: PreparedSplit, batch_size: int = 32) -> np.ndarray:
    out = []
    for start in range(0, len(split), batch_size):
        sl = slice(start, start + batch_size)
        out.append(model(split.images[sl], split.ids[sl], split.mask[sl], training=False).data)
    return np.concatenate(out)


def evaluate(model: MemeClassifier, split: PreparedSplit, batch_size: int = 32) -> ClassificationReport:
    logits = predict_logits(model, split, batch_size)
    preds = predict_batch(logits, model.cfg.fusion.threshold)
    return report(confusion(preds, split.labels))


def train(
    split: PreparedSplit,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    val_split: PreparedSplit | None = None,
    model: MemeClassifier | None = None,
) -> TrainResult:
    """One AdamW step per shuffled mini-batch; the last partial batch is kept.

    Step ``k`` (0-based) uses ``lr_at(k, total)``.  With ``val_split``, a
    classification report is computed after every epoch.
    """
    n = len(split)
    if n == 0:
        raise InputError("training set is empty")
    _, shuffle_rng, dropout_rng = seed_streams(train_cfg.seed)
    model = model or build_model(model_cfg, train_cfg.seed)
    opt = AdamW(model.named_parameters(), train_cfg)
    total = total_steps(n, train_cfg)
    result = TrainResult(model, total_steps=total)
    step = 0
    for epoch in range(1, train_cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, train_cfg.batch_size):
            idx = order[start : start + train_cfg.batch_size]
            logits = model(split.images[idx], split.ids[idx], split.mask[idx], training=True, rng=dropout_rng)
            loss = ad.bce_with_logits(logits, split.labels[idx])
            opt.zero_grad()
            loss.backward()
            lr = lr_at(step, total, train_cfg)
            opt.step(lr)
            step += 1
            acc = float((predict_batch(logits.data, model.cfg.fusion.threshold) == split.labels[idx]).mean())
            result.history.append(
                {"step": step, "epoch": epoch, "lr": lr, "loss": float(loss.data), "batch_accuracy": acc}
            )
        if val_split is not None:
            rep = evaluate(model, val_split)
            result.epoch_reports.append(rep)
            log.info("epoch %d: val accuracy %.4f, weighted F1 %.4f", epoch, rep.accuracy, rep.weighted.f1)
    return result
