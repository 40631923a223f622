"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line that is printed in the terminal summary.
"""
import contextlib
import dataclasses
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from memefusion.cli import main
from memefusion.config import PAPER_MODEL, TEST_MODEL, TEST_TRAIN, TrainConfig
from memefusion.data import clean_captions, prepare, synth_dataset
from memefusion.fusion import MemeClassifier
from memefusion.image import center_crop, normalize, patchify, preprocess
from memefusion.metrics import ConfusionMatrix, render, report, round_half_up
from memefusion.optim import lr_at, warmup_steps
from memefusion.text import build_vocab, encode
from memefusion.training import evaluate, total_steps, train
from memefusion.vit import ViTEncoder

from .conftest import ACCEPTANCE

ROOT = Path(__file__).resolve().parent.parent
GOLDEN = Path(__file__).parent / "data" / "validation_report.txt"


@contextlib.contextmanager
def criterion(name):
    info = {"detail": ""}
    try:
        yield info
    except BaseException:
        ACCEPTANCE.append((name, "FAIL", info["detail"]))
        raise
    ACCEPTANCE.append((name, "PASS", info["detail"]))


def test_full_scale_scores_not_reproducible():
    # Validation/test F1 of the full-scale system needs the shared-task corpus and
    # pretrained encoder weights; neither is available, so nothing is asserted.
    ACCEPTANCE.append(("full-scale F1 targets (0.96 / 0.93 / 1.00 / 0.46)", "N/A", "not reproducible at desk scale"))
    pytest.skip("needs the shared-task corpus and pretrained ViT / multilingual BERT weights")


def test_gradient_suite():
    with criterion("gradient suite: rel err <= 1e-4 for all ops and both encoders, < 2 min") as info:
        start = time.perf_counter()
        proc = subprocess.run(
            [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", "-k", "gradcheck",
             "tests/test_autodiff.py", "tests/test_encoders.py", "tests/test_fusion.py"],
            cwd=ROOT, capture_output=True, text=True,
        )
        elapsed = time.perf_counter() - start
        info["detail"] = f"{proc.stdout.strip().splitlines()[-1]}, {elapsed:.1f}s"
        assert proc.returncode == 0, proc.stdout[-3000:]
        assert elapsed < 120


def test_patch_arithmetic():
    with criterion("patch arithmetic: 224x224, P=16 -> 196 patches of 768, 197 tokens"):
        img = np.zeros((3, 224, 224), dtype=np.float32)
        patches = patchify(img, 16)
        assert patches.shape == (196, 768)
        assert PAPER_MODEL.vit.num_patches == 196
        vit = ViTEncoder(dataclasses.replace(TEST_MODEL.vit, dropout=0.0), np.random.default_rng(0))
        tokens = vit.embed_patches(patches[None])
        assert tokens.data.shape == (1, 197, TEST_MODEL.vit.embed_dim)


def test_preprocessing_pins():
    with criterion("preprocessing pins: crop offset 16, R 0.485 -> 0.0, output 3x224x224"):
        grid = np.arange(256 * 256).reshape(256, 256)
        assert center_crop(grid, 224)[0, 0] == grid[16, 16]
        px = np.zeros((1, 1, 3))
        px[..., 0] = 0.485
        assert normalize(px)[0, 0, 0] == 0.0
        rng = np.random.default_rng(0)
        for shape in [(1, 1, 3), (37, 500, 3), (224, 224, 3), (640, 480, 3), (300, 300)]:
            assert preprocess(rng.integers(0, 256, shape, dtype=np.uint8)).shape == (3, 224, 224)


def test_masking_exact():
    with criterion("masking: perturbing padded caption positions changes the logit by exactly 0"):
        samples = synth_dataset(0, 2)
        vocab = build_vocab(clean_captions(samples))
        cfg = dataclasses.replace(TEST_MODEL, text=dataclasses.replace(TEST_MODEL.text, vocab_size=len(vocab)))
        model = MemeClassifier(cfg, np.random.default_rng(0))
        split = prepare(samples, vocab)
        rng = np.random.default_rng(1)
        noisy = split.ids.copy()
        pad = split.mask == 0
        noisy[pad] = rng.integers(0, len(vocab), size=int(pad.sum()))
        assert not np.array_equal(noisy, split.ids)
        a = model(split.images, split.ids, split.mask).data
        b = model(split.images, noisy, split.mask).data
        assert np.array_equal(a, b)


def test_schedule_pins():
    with criterion("schedule pins: lr_at(warmup) == 2e-5 and lr_at(total) == 0, exact") as info:
        cfg = TrainConfig()
        for total in (520, 1, 7, 130):
            w = warmup_steps(total, cfg.warmup_fraction)
            assert lr_at(w, total, cfg) == 2e-5
            assert lr_at(total, total, cfg) == 0.0
        info["detail"] = "totals 520, 1, 7, 130"


def test_overfit_synthetic():
    with criterion("overfit: test preset reaches train accuracy 1.00 within 300 steps for >= 4/5 seeds, < 5 min each") as info:
        outcomes = []
        for seed in range(5):
            start = time.perf_counter()
            samples = synth_dataset(seed, 32)
            vocab = build_vocab(clean_captions(samples))
            split = prepare(samples, vocab)
            cfg = dataclasses.replace(TEST_MODEL, text=dataclasses.replace(TEST_MODEL.text, vocab_size=len(vocab)))
            tcfg = dataclasses.replace(TEST_TRAIN, seed=seed)
            assert total_steps(len(split), tcfg) <= 300
            result = train(split, cfg, tcfg)
            acc = evaluate(result.model, split).accuracy
            elapsed = time.perf_counter() - start
            outcomes.append(acc == 1.0 and elapsed < 300)
            info.setdefault("runs", []).append(f"seed {seed}: acc {round_half_up(acc)} in {result.total_steps} steps, {elapsed:.0f}s")
        info["detail"] = "; ".join(info["runs"])
        assert sum(outcomes) >= 4, info["detail"]


def test_metrics_oracle_test_set():
    with criterion("metrics oracle: report([[9,263],[6,389]]) rounds to every reference test-set cell"):
        rep = report(ConfusionMatrix(((9, 263), (6, 389))))
        nt, t = rep.per_class["Non-Troll"], rep.per_class["Troll"]
        r = lambda m: (round_half_up(m.precision), round_half_up(m.recall), round_half_up(m.f1))  # noqa: E731
        assert r(nt) == ("0.60", "0.03", "0.06") and nt.support == 272
        assert r(t) == ("0.60", "0.98", "0.74") and t.support == 395
        assert round_half_up(rep.accuracy) == "0.60"
        assert r(rep.macro) == ("0.60", "0.51", "0.40")
        assert r(rep.weighted) == ("0.60", "0.60", "0.47")
        assert rep.macro.support == 667


def test_golden_render():
    with criterion("render: byte match against the validation-table golden file"):
        assert render(report(ConfusionMatrix(((96, 5), (4, 124))))).encode() == GOLDEN.read_bytes()


def test_train_determinism(tmp_path):
    with criterion("determinism: two train runs give identical history and checkpoint bytes"):
        config = ROOT / "configs" / "test_synthetic.toml"
        for out in ("a", "b"):
            assert main(["train", "--config", str(config), "--out", str(tmp_path / out)]) == 0
        for name in ("history.jsonl", "model.ckpt", "vocab.tsv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_masking_helper_sanity():
    # padded positions exist in the synthetic captions, otherwise the masking check is vacuous
    samples = synth_dataset(0, 2)
    seq = encode(clean_captions(samples)[0], build_vocab(clean_captions(samples)))
    assert seq.attention_mask.sum() < len(seq.attention_mask)
