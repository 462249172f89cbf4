import math

import numpy as np
import pytest

from neurotok.errors import ConstantSignal, ShapeMismatch
from neurotok.metrics import SNR_CAP_DB, batch_recon_metrics, codebook_stats, mask_report, pearson, recon_metrics


def test_codebook_stats_uniform_and_degenerate():
    s = codebook_stats(np.repeat(np.arange(20), 3), 20)
    assert s.normalized_entropy == pytest.approx(1.0) and s.gini == pytest.approx(0.0, abs=1e-15)
    assert s.top10_contribution == pytest.approx(2 / 20) and s.unused_count == 0
    s = codebook_stats(np.full(9, 3), 8)
    assert s.normalized_entropy == 0 and s.unused_count == 7
    assert s.gini == pytest.approx(7 / 8)


def test_codebook_stats_hand_histogram():
    s = codebook_stats([4, 2, 1, 1], counts=True)
    assert s.normalized_entropy == pytest.approx(0.875, abs=1e-12)
    assert s.gini == pytest.approx(0.3125, abs=1e-12)
    assert s.top10_contribution == pytest.approx(0.5)
    assert s.total == 8 and s.histogram == [4, 2, 1, 1]
    with pytest.raises(ValueError):
        codebook_stats([1, 2], None)


def test_recon_metrics_cases():
    x = np.random.default_rng(0).normal(size=20)
    mse, r, snr = recon_metrics(x, x)
    assert (mse, r, snr) == (0.0, pytest.approx(1.0), SNR_CAP_DB)
    assert recon_metrics(x, -x)[1] == pytest.approx(-1.0)
    mse, _, snr = recon_metrics([1, 2, 3, 4], [1, 2, 3, 5])
    assert mse == 0.25 and snr == pytest.approx(10 * math.log10(30), abs=1e-12)
    with pytest.raises(ShapeMismatch):
        recon_metrics([1, 2], [1, 2, 3])
    with pytest.raises(ConstantSignal):
        pearson(np.ones(5), np.arange(5.0))


def test_batch_recon_metrics_skips_constant_patches_for_r():
    x = np.stack([np.arange(4.0), np.ones(4)])
    out = batch_recon_metrics(x, x)
    assert out["mse"] == 0 and out["pearson_r"] == pytest.approx(1.0)


def test_mask_report_cases():
    scores = np.array([0.9, 0.1, 0.8, 0.2])
    out = mask_report(scores, np.array([0, 2]))
    assert out["gap"] == pytest.approx(0.85 - 0.15)
    assert out["relative_increase"] == pytest.approx(0.7 / 0.15)
    bool_mask = np.array([True, False, True, False])
    assert mask_report(scores, bool_mask) == out
    assert mask_report(np.full(6, 0.3), np.array([1, 4]))["gap"] == 0.0


def test_uniform_plan_gap_vanishes_on_corpus(corpus):
    from neurotok.har import corpus_scores
    from neurotok.importance import sample_mask

    scores = corpus_scores(corpus["patches"], corpus["sample_rate_hz"])
    rng = np.random.default_rng(0)
    gaps = [mask_report(s, sample_mask(s, 0.5, 0.0, rng)).get("gap") for _ in range(160) for s in scores]
    assert len(gaps) == 10_240
    assert abs(np.mean(gaps)) < 0.02
