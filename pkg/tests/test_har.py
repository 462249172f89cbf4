import math

import numpy as np
import pytest

from neurotok import autodiff as ad
from neurotok.errors import EmptyMask, IndexOutOfRange, ShapeMismatch
from neurotok.har import (DOMAINS, Pretrainer, autoregressive_infer, har_loss, independent_loss, init_har,
                          layer_weights, predict_layer, pretrain, pretrain_config, teacher_forced_argmax)
from neurotok.optim import TrainConfig
from neurotok.tokenizer import Tokenizer, train_tokenizer


def fresh(cfg, seed=0):
    return init_har(cfg, np.random.default_rng(seed))


def set_bias_only(params, cfg, logits_by_layer):
    """Zero every head weight; head biases become the logits regardless of input."""
    for d in DOMAINS:
        for layer in range(cfg.rvq_layers):
            params[f"har.{d}.head{layer}.w"].data[:] = 0.0
            params[f"har.{d}.head{layer}.b"].data[:] = logits_by_layer[layer]


def test_layer_weights():
    np.testing.assert_array_equal(layer_weights(3), [1.0, 0.5, 0.25])


def test_first_layer_ignores_codes(tiny_cfg):
    p = fresh(tiny_cfg)
    h = np.random.default_rng(1).normal(size=(4, tiny_cfg.embed_dim))
    a = predict_layer(p, h, np.zeros((4, 2), int), "time", 1).data
    b = predict_layer(p, h, np.full((4, 2), 3), "time", 1).data
    np.testing.assert_array_equal(a, b)


def test_zero_embedding_reduces_to_the_plain_head(tiny_cfg):
    p = fresh(tiny_cfg)
    p["har.freq.embed0"].data[:] = 0.0
    h = np.random.default_rng(2).normal(size=(3, tiny_cfg.embed_dim))
    cond = predict_layer(p, h, np.array([[1], [2], [4]]), "freq", 2).data
    from neurotok import nets
    plain = nets.linear(p, "har.freq.head1", nets.norm(p, "har.freq.ln1", ad.Tensor(h))).data
    np.testing.assert_allclose(cond, plain, atol=1e-14)


def test_conditioning_changes_deeper_layers(tiny_cfg):
    p = fresh(tiny_cfg)
    p["har.time.embed0"].data *= 100
    h = np.random.default_rng(3).normal(size=(1, tiny_cfg.embed_dim))
    a = predict_layer(p, h, np.array([[0]]), "time", 2).data
    b = predict_layer(p, h, np.array([[1]]), "time", 2).data
    assert np.abs(a - b).max() > 1e-3


def test_predict_layer_errors(tiny_cfg):
    p = fresh(tiny_cfg)
    h = np.zeros((2, tiny_cfg.embed_dim))
    with pytest.raises(IndexOutOfRange):
        predict_layer(p, h, np.zeros((2, 2), int), "time", tiny_cfg.rvq_layers + 1)
    with pytest.raises(IndexOutOfRange):
        predict_layer(p, h, np.zeros((2, 2), int), "time", 0)
    with pytest.raises(ShapeMismatch):
        predict_layer(p, h, np.zeros((3, 2), int), "time", 2)


def test_uniform_heads_give_log_k(tiny_cfg):
    p = fresh(tiny_cfg)
    k = tiny_cfg.codebook_size
    set_bias_only(p, tiny_cfg, [np.zeros(k)] * tiny_cfg.rvq_layers)
    h = np.random.default_rng(4).normal(size=(6, tiny_cfg.embed_dim))
    t = np.random.default_rng(5).integers(0, k, (6, 2, tiny_cfg.rvq_layers))
    total, rep = har_loss(p, h, t)
    for d in DOMAINS:
        np.testing.assert_allclose(rep.losses[d], math.log(k), atol=1e-12)
    assert total.item() == pytest.approx(2 * math.log(k) * layer_weights(tiny_cfg.rvq_layers).sum(), abs=1e-12)
    assert independent_loss(p, h, t).item() == pytest.approx(2 * tiny_cfg.rvq_layers * math.log(k), abs=1e-12)


def test_hand_computed_single_position(tiny_cfg):
    p = fresh(tiny_cfg)
    l1 = np.array([2.0, 0.0, 0.0, 0.0, 0.0])
    l2 = np.array([0.0, 1.0, 0.0, 0.0, 3.0])
    set_bias_only(p, tiny_cfg, [l1, l2])
    for d in DOMAINS:
        p[f"har.{d}.embed0"].data[:] = 0.0
    t = np.array([[[0, 4], [3, 1]]])      # time targets (0, 4); freq targets (3, 1)

    def ce(logits, k):
        return -(logits[k] - math.log(np.exp(logits).sum()))

    expected = (ce(l1, 0) + ce(l1, 3)) + 0.5 * (ce(l2, 4) + ce(l2, 1))
    total, rep = har_loss(p, np.ones((1, tiny_cfg.embed_dim)), t)
    assert total.item() == pytest.approx(expected, abs=1e-12)
    assert rep.accuracy["time"] == [1.0, 1.0] and rep.accuracy["freq"] == [0.0, 0.0]
    flat = rep.flat()
    assert flat["l_har"] == total.item() and flat["acc_time_2"] == 1.0
    assert flat["loss_freq_1"] == pytest.approx(ce(l1, 3))


def test_loss_errors(tiny_cfg):
    p = fresh(tiny_cfg)
    with pytest.raises(EmptyMask):
        har_loss(p, np.zeros((0, tiny_cfg.embed_dim)), np.zeros((0, 2, 2), int))
    with pytest.raises(ShapeMismatch):
        har_loss(p, np.zeros((3, tiny_cfg.embed_dim)), np.zeros((2, 2, 2), int))
    model = Pretrainer(tiny_cfg)
    x = np.zeros((1, 4, tiny_cfg.patch_len))
    with pytest.raises(EmptyMask):
        model.loss(x, np.zeros((1, 4, 2, 2), int), np.zeros((1, 4), bool))


def test_inference_paths(tiny_cfg):
    p = fresh(tiny_cfg)
    h = np.random.default_rng(6).normal(size=(5, tiny_cfg.embed_dim))
    ar = autoregressive_infer(p, h, tiny_cfg.rvq_layers)
    for di, d in enumerate(DOMAINS):
        np.testing.assert_array_equal(ar[:, di, 0], predict_layer(p, h, None, d, 1).data.argmax(-1))
    # teacher forcing on the greedy chain's own output reproduces it exactly
    np.testing.assert_array_equal(teacher_forced_argmax(p, h, ar), ar)


def test_inference_gap_is_zero_on_the_first_layer(tiny_cfg):
    model = Pretrainer(tiny_cfg)
    rng = np.random.default_rng(7)
    x = rng.normal(size=(2, 6, tiny_cfg.patch_len)) * 0.1
    codes = rng.integers(0, tiny_cfg.codebook_size, (2, 6, 2, tiny_cfg.rvq_layers))
    mask = rng.random((2, 6)) < 0.5
    mask[0, 0] = True
    gap = model.inference_gap(x, codes, mask)
    assert len(gap) == tiny_cfg.rvq_layers and gap[0] == 0.0


def test_pretrain_is_deterministic_and_freezes_the_tokenizer(tmp_path, tiny_cfg, corpus):
    x = corpus["patches"][:8, :, :2, :40]
    tcfg = TrainConfig(epochs=2, batch_size=4, warmup_epochs=1, seed=1)
    tok, _ = train_tokenizer(x, tiny_cfg, tcfg)
    before = {k: v.data.copy() for k, v in tok.params.items()}
    codes_before = tok.tokenize(x.reshape(8, 8, 40)).codes
    m1, h1 = pretrain(x, tok, tcfg)
    m2, h2 = pretrain(x, tok, tcfg)
    assert h1 == h2
    assert all(np.array_equal(before[k], v.data) for k, v in tok.params.items())
    np.testing.assert_array_equal(tok.tokenize(x.reshape(8, 8, 40)).codes, codes_before)
    assert h1[0]["mask_weight"] < h1[-1]["mask_weight"] == pytest.approx(0.7)
    m1.save(tmp_path / "har")
    back = Pretrainer.load(tmp_path / "har")
    mask = np.zeros((8, 8), bool)
    mask[:, ::2] = True
    a = m1.loss(x.reshape(8, 8, 40), codes_before, mask)[1].total
    b = back.loss(x.reshape(8, 8, 40), codes_before, mask)[1].total
    assert a == pytest.approx(b, rel=1e-5)


def test_pretrain_defaults():
    assert pretrain_config().lr == 5e-4
    assert pretrain_config(epochs=3, warmup_epochs=1).epochs == 3
