import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from neurotok import importance as imp
from neurotok.errors import PatchTooShort, TooFewPatches

RATE = 200.0


def sine(freq, n=200, rate=RATE, phase=0.0):
    return np.sin(2 * np.pi * freq * np.arange(n) / rate + phase)


def power(x):
    from neurotok.spectral import psd
    return psd(x, RATE)


def test_hjorth_degenerate_and_oracle():
    act, mob, comp = imp.hjorth(np.full(10, 3.0))
    assert act == pytest.approx(math.log(1e-8)) and mob == 0 and comp == 0
    x = np.random.default_rng(0).normal(size=50)
    np.testing.assert_allclose(imp.hjorth(x), oracles.hjorth(list(x)), rtol=1e-9)
    with pytest.raises(PatchTooShort):
        imp.hjorth(np.ones(2))


@pytest.mark.parametrize("freq", [3.0, 10.0, 25.0])
def test_mobility_of_a_sinusoid(freq):
    n = 400
    _, mob, _ = imp.hjorth(sine(freq, n))
    assert mob == pytest.approx(2 * math.sin(math.pi * freq / RATE), rel=0.05)


def test_band_ratios():
    assert imp.neural_band_ratio(*power(sine(10))) == pytest.approx(1.0, abs=1e-9)
    assert imp.neural_band_ratio(*power(sine(50))) == pytest.approx(0.0, abs=1e-9)
    assert imp.neural_band_ratio(*power(sine(10) + sine(50))) == pytest.approx(0.5, abs=1e-9)
    assert imp.artifact_penalty(*power(sine(1))) == pytest.approx(0.0, abs=1e-9)
    assert imp.artifact_penalty(*power(sine(10))) == pytest.approx(1.0, abs=1e-9)
    assert imp.artifact_penalty(*power(sine(1) + sine(10))) == pytest.approx(0.5, abs=1e-9)


def test_irregularity_cases():
    assert imp.irregularity(np.arange(10.0)) == 0
    assert imp.irregularity(np.zeros(10)) == 0
    # alternating +-1: |d1| is constant 2, so the numerator is 0
    assert imp.irregularity(np.array([1.0, -1.0] * 5)) == 0
    # hand case [0, 1, 3, 3]: d1 = [1, 2, 0], |d|d1|| = [1, 2] -> 1.5 / 1
    assert imp.irregularity(np.array([0.0, 1.0, 3.0, 3.0])) == pytest.approx(1.5 / (1.0 + 1e-8))
    with pytest.raises(PatchTooShort):
        imp.irregularity(np.ones(2))


def test_aggregate_fixtures():
    raw = {m: np.array([2.0, 1.0]) for m in imp.METRICS}
    m = imp.aggregate_scores(raw)
    np.testing.assert_allclose(m.score, [1.0, 0.0], atol=1e-15)
    m = imp.aggregate_scores({k: np.ones(4) for k in imp.METRICS})
    np.testing.assert_allclose(m.score, 0.5)
    raw = {
        "neural": np.array([0.1, 0.5, 0.3]),        # -> 0, 1, 0.5
        "clean": np.array([3.0, 1.0, 2.0]),         # -> 1, 0, 0.5
        "complexity": np.array([5.0, 5.0, 5.0]),    # -> 0.5 each
        "irreg": np.array([0.0, 4.0, 1.0]),         # -> 0, 1, 0.25
        "mobility": np.array([2.0, 0.0, 1.0]),      # -> 1, 0, 0.5
    }
    expected = [0.30 * 0 + 0.25 * 1 + 0.20 * 0.5 + 0.15 * 0 + 0.10 * 1,
                0.30 * 1 + 0.25 * 0 + 0.20 * 0.5 + 0.15 * 1 + 0.10 * 0,
                0.30 * 0.5 + 0.25 * 0.5 + 0.20 * 0.5 + 0.15 * 0.25 + 0.10 * 0.5]
    np.testing.assert_allclose(imp.aggregate_scores(raw).score, expected, atol=1e-15)
    with pytest.raises(TooFewPatches):
        imp.aggregate_scores({k: np.ones(1) for k in imp.METRICS})


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (6, 40), elements=st.floats(-5, 5, allow_nan=False)))
def test_scores_are_bounded(x):
    m = imp.score_patches(x, RATE)
    assert np.all(m.score >= -1e-12) and np.all(m.score <= 1 + 1e-12)
    for v in m.normalized.values():
        assert np.all(v >= 0) and np.all(v <= 1)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 100.0))
def test_scale_invariance(seed, k):
    # exact up to the epsilon guards, whose relative weight is about eps / (k^2 var)
    x = np.random.default_rng(seed).normal(size=64)
    a, b = imp.raw_metrics(x, RATE), imp.raw_metrics(k * x, RATE)
    for name in ("mobility", "complexity", "irreg", "neural", "clean"):
        assert b[name] == pytest.approx(a[name], rel=1e-5, abs=1e-9)
    assert b["activity"] - a["activity"] == pytest.approx(2 * math.log(k), abs=1e-5)


def test_curriculum_weight():
    assert imp.curriculum_weight(0, 100) == 0.2
    assert imp.curriculum_weight(100, 100) == 0.7
    assert imp.curriculum_weight(50, 100) == pytest.approx(0.45, abs=1e-15)
    with pytest.raises(ValueError):
        imp.curriculum_weight(101, 100)


def test_mask_size_and_paper_shape():
    rng = np.random.default_rng(0)
    assert imp.n_masked(0.5, 570) == 285
    scores = rng.random(570)
    plan = imp.sample_mask(scores, 0.5, 0.7, rng)
    assert len(plan.indices) == 285 and len(set(plan.indices)) == 285
    np.testing.assert_allclose(plan.combined, 0.7 * scores + 0.3 * plan.uniform, atol=1e-15)
    assert plan.weight == 0.7


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 40), st.floats(0.05, 0.95), st.floats(0.0, 1.0))
def test_mask_always_has_exact_size(seed, n, ratio, w):
    rng = np.random.default_rng(seed)
    plan = imp.sample_mask(rng.random(n), ratio, w, rng)
    assert len(np.unique(plan.indices)) == imp.n_masked(ratio, n)
    assert plan.indices.min(initial=0) >= 0 and plan.indices.max(initial=0) < n


def test_uniform_mask_is_exchangeable():
    rng = np.random.default_rng(1)
    scores = rng.random(20)
    draws = 10_000
    counts = np.zeros(20)
    for _ in range(draws):
        counts[imp.sample_mask(scores, 0.5, 0.0, rng).indices] += 1
    freq = counts / draws
    sigma = math.sqrt(0.5 * 0.5 / draws)
    assert np.all(np.abs(freq - 0.5) < 3.5 * sigma)


def test_dominant_patch_is_picked_most():
    rng = np.random.default_rng(2)
    scores = np.zeros(10)
    scores[4] = 1.0
    counts = np.zeros(10)
    for _ in range(10_000):
        counts[imp.sample_mask(scores, 0.1, 1.0, rng).indices] += 1
    assert counts.argmax() == 4
    # exp(1/0.8) against nine exp(0) competitors
    p = math.exp(1 / 0.8) / (math.exp(1 / 0.8) + 9)
    assert counts[4] / 10_000 == pytest.approx(p, abs=0.02)


def test_masked_patches_score_higher_when_weighted():
    rng = np.random.default_rng(3)
    scores = rng.random(40)
    gaps = []
    for _ in range(2000):
        m = imp.sample_mask(scores, 0.5, 0.7, rng).as_bool(40)
        gaps.append(scores[m].mean() - scores[~m].mean())
    assert np.mean(gaps) > 0
