import math
import os

import numpy as np
import pytest

import textcaus


def test_version():
    assert textcaus.__version__


def test_tokenize_ngrams():
    tokens = textcaus.tokenize("Pt with sinus tach overnight.", ngram_max=2)
    assert "sinus" in tokens
    assert "sinus_tach" in tokens
    assert "with" not in tokens  # stop word


def test_rubin_pool_hand_case():
    pooled = textcaus.rubin_pool([1.0, 3.0], [1.0, 1.0])
    assert pooled["estimate"] == pytest.approx(2.0, abs=1e-12)
    assert pooled["se"] == pytest.approx(2.0, abs=1e-12)


def test_bh_and_youden():
    discovered, qvals = textcaus.bh_fdr([0.01, 0.02, 0.04, 0.5], 0.05)
    assert sum(discovered) == 2
    assert len(qvals) == 4
    t = textcaus.youden_threshold(np.array([1.0, 2.0, 3.0, 4.0]), [0, 0, 1, 1])
    assert t == pytest.approx(2.5, abs=1e-12)


def test_full_match_simple():
    distance = np.array([[0.0, 5.0], [5.0, 1.0]])
    result = textcaus.full_match(distance)
    assert result["n_sets"] == 2
    assert result["total_distance"] == pytest.approx(1.0, abs=1e-9)
    assert math.isclose(textcaus.effective_sample_size(result["weights"]), 4.0)


def test_att_estimate_runs():
    rng = np.random.default_rng(0)
    n = 200
    z = (rng.random(n) < 0.5).astype(int)
    y = (rng.random(n) < 0.6).astype(float)
    w = np.ones(n)
    sets = list(range(n))
    fit = textcaus.att_estimate(y, [int(v) for v in z], w, sets)
    assert fit["se"] > 0
    assert fit["ci_low"] < fit["estimate"] < fit["ci_high"]


def test_propensity_and_pca_shapes():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(120, 4))
    z = (rng.random(120) < 0.5).astype(int).tolist()
    scores = textcaus.fit_propensity(x, z)
    assert scores.shape == (120,)
    assert np.all((scores > 0) & (scores < 1))
    pcs = textcaus.pca_scores(x, 2)
    assert pcs.shape == (120, 2)


def test_sr_scores_dense_oracle():
    rng = np.random.default_rng(2)
    counts = rng.poisson(2.0, size=(40, 12)).astype(float)
    counts[0] = 0  # empty document -> zero SR row
    x = rng.normal(size=(40, 3))
    scores = textcaus.sr_scores(counts, x, penalty=0.5)
    assert scores.shape == (40, 3)
    assert np.allclose(scores[0], 0.0)


def test_generate_synth_writes_files(tmp_path):
    out = tmp_path / "synth"
    sample_att = textcaus.generate_synth(
        str(out), seed=7, n_patients=80, p_covariates=6, vocab_size=60, true_att=0.05
    )
    assert math.isfinite(sample_att)
    for name in [
        "notes.jsonl",
        "covariates.csv",
        "covariates_full.csv",
        "treatment_outcome.csv",
        "ground_truth.json",
    ]:
        assert (out / name).exists(), name
    assert os.path.getsize(out / "notes.jsonl") > 0
