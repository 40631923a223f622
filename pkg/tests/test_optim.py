import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memefusion import autodiff as ad
from memefusion.config import TrainConfig
from memefusion.data import clean_captions, prepare, synth_dataset
from memefusion.errors import InputError
from memefusion.optim import AdamW, NonFiniteGradientError, OptimizerState, adamw_step, lr_at, warmup_steps
from memefusion.text import build_vocab
from memefusion.training import build_model, total_steps, train

from .conftest import small_model_cfg

DEFAULTS = TrainConfig()


class TestSchedule:
    def test_peak_at_warmup(self):
        total = 520
        w = warmup_steps(total, DEFAULTS.warmup_fraction)
        assert w == 52
        assert lr_at(w, total, DEFAULTS) == 2e-5

    def test_zero_at_end(self):
        assert lr_at(520, 520, DEFAULTS) == 0.0

    def test_half_warmup(self):
        assert lr_at(26, 520, DEFAULTS) == pytest.approx(1e-5, abs=1e-18)

    def test_starts_at_zero(self):
        assert lr_at(0, 100, DEFAULTS) == 0.0

    def test_no_warmup(self):
        cfg = dataclasses.replace(DEFAULTS, warmup_fraction=0.0)
        assert lr_at(0, 10, cfg) == 2e-5
        assert lr_at(5, 10, cfg) == pytest.approx(1e-5)

    def test_total_zero(self):
        with pytest.raises(ValueError):
            lr_at(0, 0, DEFAULTS)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 400), st.floats(0.0, 0.9))
    def test_piecewise_linear_max_at_warmup(self, total, frac):
        cfg = dataclasses.replace(DEFAULTS, warmup_fraction=frac)
        lrs = np.array([lr_at(s, total, cfg) for s in range(total + 1)])
        w = warmup_steps(total, frac)
        assert lrs.max() == cfg.lr == lrs[w]
        assert (np.diff(lrs[: w + 1]) >= 0).all() and (np.diff(lrs[w:]) <= 0).all()
        # second differences vanish away from the kink
        d2 = np.diff(lrs, 2)
        away = np.ones_like(d2, dtype=bool)
        away[max(w - 1, 0)] = False
        assert np.abs(d2[away]).max(initial=0) <= 1e-18


def plain_adam(p, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        p = p - lr * mhat / (np.sqrt(vhat) + eps)
    return p


class TestAdamW:
    def test_zero_grad_no_decay_unchanged(self, rng):
        p = rng.normal(size=(3, 3))
        before = p.copy()
        adamw_step({"w": p}, {"w": np.zeros_like(p)}, OptimizerState(), 1e-3, dataclasses.replace(DEFAULTS, weight_decay=0))
        np.testing.assert_array_equal(p, before)

    def test_first_step_magnitude_is_lr(self):
        p = np.array([0.5])
        state = OptimizerState()
        cfg = dataclasses.replace(DEFAULTS, weight_decay=0)
        adamw_step({"w": p}, {"w": np.array([1.0])}, state, 1e-3, cfg)
        # m_hat = v_hat = 1 at t = 1
        assert p[0] == pytest.approx(0.5 - 1e-3 / (1 + 1e-8), abs=1e-15)
        assert state.step == 1

    def test_decoupled_decay(self, rng):
        p = rng.normal(size=5)
        before = p.copy()
        adamw_step({"w": p}, {"w": np.zeros(5)}, OptimizerState(), 1e-3, dataclasses.replace(DEFAULTS, weight_decay=0.01))
        np.testing.assert_allclose(p, before * (1 - 1e-3 * 0.01), rtol=1e-15)

    def test_matches_plain_adam_without_decay(self):
        for seed in range(5):
            r = np.random.default_rng(seed)
            p0 = r.normal(size=(4, 3))
            grads = [r.normal(size=(4, 3)) for _ in range(25)]
            p = p0.copy()
            state = OptimizerState()
            cfg = dataclasses.replace(DEFAULTS, weight_decay=0)
            for g in grads:
                adamw_step({"w": p}, {"w": g}, state, 3e-3, cfg)
            np.testing.assert_allclose(p, plain_adam(p0, grads, 3e-3), atol=1e-12, rtol=0)

    def test_non_finite_names_parameter(self):
        with pytest.raises(NonFiniteGradientError, match="encoder.w"):
            adamw_step({"encoder.w": np.zeros(2)}, {"encoder.w": np.array([np.nan, 0])}, OptimizerState(), 1e-3, DEFAULTS)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            adamw_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, OptimizerState(), 1e-3, DEFAULTS)


# =============================================================================
# Training loop (32x32 crops keep these fast)
# =============================================================================


def tiny_split(seed=0, n_per_class=8, image_size=32):
    samples = synth_dataset(seed, n_per_class, 48)
    vocab = build_vocab(clean_captions(samples))
    return prepare(samples, vocab, image_size=image_size), len(vocab)


def test_total_steps_arithmetic():
    cfg = dataclasses.replace(DEFAULTS, batch_size=16, epochs=7)
    assert total_steps(64, cfg) == 4 * 7
    assert total_steps(65, cfg) == 5 * 7


def test_partial_batch_kept():
    split, v = tiny_split(n_per_class=10)
    cfg = TrainConfig(lr=1e-3, batch_size=16, epochs=2, seed=1)
    res = train(split, small_model_cfg(v), cfg)
    assert res.total_steps == len(res.history) == 4
    assert [h["epoch"] for h in res.history] == [1, 1, 2, 2]
    assert res.history[-1]["step"] == 4


def test_history_lr_follows_schedule():
    split, v = tiny_split()
    cfg = TrainConfig(lr=1e-3, batch_size=4, epochs=2, seed=1)
    res = train(split, small_model_cfg(v), cfg)
    assert [h["lr"] for h in res.history] == [lr_at(k, res.total_steps, cfg) for k in range(res.total_steps)]


def test_training_deterministic():
    split, v = tiny_split()
    cfg = TrainConfig(lr=1e-3, batch_size=4, epochs=2, seed=5)
    mcfg = small_model_cfg(v, dropout=0.1)
    a, b = train(split, mcfg, cfg), train(split, mcfg, cfg)
    assert a.history == b.history
    for (na, pa), (nb, pb) in zip(a.model.named_parameters(), b.model.named_parameters()):
        assert na == nb and pa.data.tobytes() == pb.data.tobytes()


def test_empty_dataset():
    split, v = tiny_split()
    empty = dataclasses.replace(split, images=split.images[:0], ids=split.ids[:0], mask=split.mask[:0], labels=split.labels[:0], sample_ids=[])
    with pytest.raises(InputError):
        train(empty, small_model_cfg(v), DEFAULTS)


def test_single_step_descends_on_average():
    split, v = tiny_split(n_per_class=8)
    cfg = TrainConfig(lr=1e-4, batch_size=16, epochs=1, weight_decay=0.0)
    deltas = []
    for seed in range(20):
        model = build_model(small_model_cfg(v), seed)
        idx = np.random.default_rng(seed).permutation(len(split))[:8]
        batch = (split.images[idx], split.ids[idx], split.mask[idx])

        def loss():
            return ad.bce_with_logits(model(*batch, training=False), split.labels[idx])

        before = loss()
        model.zero_grad()
        before.backward()
        opt = AdamW(model.named_parameters(), cfg)
        opt.step(cfg.lr)
        deltas.append(float(loss().data) - float(before.data))
    assert np.mean(deltas) < 0
    assert sum(d < 0 for d in deltas) >= 18
