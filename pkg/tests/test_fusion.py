import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memefusion import autodiff as ad
from memefusion.autodiff import Tensor
from memefusion.config import FusionConfig
from memefusion.fusion import ClassLabel, FusionHead, MemeClassifier, bce_loss, model_parameter_count, predict

from .conftest import small_model_cfg


def head(cfg=FusionConfig(dropout=0.0)):
    h = FusionHead(cfg, np.random.default_rng(0), np.float64)
    return h


def set_out(h, weight, bias):
    h.out.weight.data = np.asarray(weight, dtype=np.float64).reshape(256, 1)
    h.out.bias.data = np.array([bias], dtype=np.float64)


def e1(sign=1.0):
    v = np.zeros((1, 128))
    v[0, 0] = sign
    return Tensor(v)


class TestFuse:
    def test_zero_weights_bias(self, rng):
        h = head()
        set_out(h, np.zeros(256), 0.7)
        out = h(Tensor(rng.normal(size=(3, 128))), Tensor(rng.normal(size=(3, 128))))
        np.testing.assert_array_equal(out.data, [0.7] * 3)

    def test_order_sensitive(self, rng):
        h = head()
        w = np.concatenate([np.ones(128), -np.ones(128)])
        set_out(h, w, 0.0)
        a, b = np.abs(rng.normal(size=(1, 128))), np.abs(rng.normal(size=(1, 128))) + 1
        assert h(Tensor(a), Tensor(b)).data[0] != h(Tensor(b), Tensor(a)).data[0]

    def test_relu_gate(self):
        h = head()
        set_out(h, np.ones(256), 0.0)
        assert h(e1(1.0), e1(-1.0)).data[0] == 1.0

    def test_width_mismatch(self, rng):
        with pytest.raises(ad.ShapeError):
            head()(Tensor(rng.normal(size=(1, 127))), Tensor(rng.normal(size=(1, 128))))

    def test_dropout_after_relu_only_in_training(self, rng):
        h = head(FusionConfig(dropout=0.5))
        img, txt = Tensor(rng.normal(size=(4, 128))), Tensor(rng.normal(size=(4, 128)))
        np.testing.assert_array_equal(h(img, txt).data, h(img, txt, training=False, rng=rng).data)
        assert not np.array_equal(h(img, txt).data, h(img, txt, training=True, rng=rng).data)

    @pytest.mark.parametrize("modality,zeroed", [("image", slice(128, 256)), ("text", slice(0, 128))])
    def test_ablation_zeroes_branch(self, modality, zeroed, rng):
        h = head(FusionConfig(dropout=0.0, modality=modality))
        w = np.zeros(256)
        w[zeroed] = 1.0
        set_out(h, w, 0.25)
        out = h(Tensor(rng.normal(size=(2, 128))), Tensor(rng.normal(size=(2, 128))))
        np.testing.assert_array_equal(out.data, [0.25, 0.25])


class TestLoss:
    def test_logit_zero(self):
        for y in (0, 1):
            assert float(bce_loss(0.0, y).data) == pytest.approx(math.log(2), abs=1e-12)

    def test_confident_right(self):
        # ln(1 + e^-20)
        assert float(bce_loss(20.0, 1).data) == pytest.approx(2.061153622438558e-09, rel=1e-9)

    def test_confident_wrong(self):
        assert float(bce_loss(-20.0, 1).data) == pytest.approx(20.0, abs=1e-8)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-15, 15), st.sampled_from([0, 1]))
    def test_matches_naive(self, z, y):
        s = 1 / (1 + math.exp(-z))
        naive = -y * math.log(s) - (1 - y) * math.log(1 - s)
        loss = float(bce_loss(z, y).data)
        assert loss >= 0
        assert abs(loss - naive) <= 1e-9

    def test_monotone(self):
        z = np.linspace(-30, 30, 301)
        pos = [float(bce_loss(v, 1).data) for v in z]
        neg = [float(bce_loss(v, 0).data) for v in z]
        assert all(a > b for a, b in zip(pos, pos[1:]))
        assert all(a < b for a, b in zip(neg, neg[1:]))


class TestPredict:
    def test_tie_is_troll(self):
        assert predict(0.0) is ClassLabel.TROLL

    def test_signs(self):
        assert predict(-3.0) is ClassLabel.NONTROLL
        assert predict(3.0) is ClassLabel.TROLL

    def test_monotone(self):
        labels = [int(predict(z)) for z in np.linspace(-10, 10, 201)]
        assert labels == sorted(labels)

    def test_label_parse(self):
        assert ClassLabel.parse("Troll") is ClassLabel.TROLL
        assert ClassLabel.parse("nontroll") is ClassLabel.NONTROLL
        with pytest.raises(ValueError):
            ClassLabel.parse("maybe")


def test_gradient_reaches_both_encoders(rng):
    cfg = small_model_cfg()
    model = MemeClassifier(cfg, np.random.default_rng(0), np.float64)
    images = rng.normal(size=(2, 3, 32, 32))
    ids = np.array([[2, 5, 6, 3] + [0] * 124, [2, 7, 3] + [0] * 125])
    mask = (ids != 0).astype(np.int64)
    ad.bce_with_logits(model(images, ids, mask), [1, 0]).backward()
    assert any(np.abs(p.grad).max() > 0 for p in model.vit.parameters())
    assert any(np.abs(p.grad).max() > 0 for p in model.text.parameters())
    assert np.abs(model.fusion.out.weight.grad).max() > 0


def test_full_model_parameter_count(small_cfg):
    model = MemeClassifier(small_cfg, np.random.default_rng(0))
    assert model.num_parameters() == model_parameter_count(small_cfg)
    names = [n for n, _ in model.named_parameters()]
    assert len(names) == len(set(names))


def test_full_model_gradcheck(rng):
    cfg = small_model_cfg(vocab_size=12, max_len=16)
    model = MemeClassifier(cfg, np.random.default_rng(2), np.float64)
    images = rng.normal(size=(2, 3, 32, 32))
    ids = np.array([[2, 5, 6, 3] + [0] * 12, [2, 7, 8, 9, 3] + [0] * 11])
    mask = (ids != 0).astype(np.int64)
    f = lambda: ad.bce_with_logits(model(images, ids, mask), [1, 0])  # noqa: E731
    assert ad.gradcheck(f, model.parameters(), max_coords=8, rng=np.random.default_rng(0)) <= 1e-4


def test_dropout_config_forwarded():
    cfg = small_model_cfg(dropout=0.1)
    model = MemeClassifier(dataclasses.replace(cfg), np.random.default_rng(0))
    assert model.vit.encoder.blocks[0].attn.dropout == 0.1
    assert model.fusion.cfg.dropout == 0.1
