import math
import random

import pytest

import rmtbvqa


def test_version_and_config():
    assert rmtbvqa.__version__
    cfg = rmtbvqa.config(B=4, epochs=5)
    assert cfg["B"] == 4 and cfg["epochs"] == 5
    assert cfg["tau"] == pytest.approx(0.1)


def test_config_rejects_unknown_key():
    with pytest.raises(ValueError):
        rmtbvqa.config(not_a_key=1)


def test_rank_statistics_match_brute_force():
    rng = random.Random(3)
    a = [rng.randint(0, 5) for _ in range(40)]
    b = [x + rng.random() for x in a]

    def ranks(v):
        return [sum(y < x for y in v) + (sum(y == x for y in v) + 1) / 2 for x in v]

    def pearson(x, y):
        mx, my = sum(x) / len(x), sum(y) / len(y)
        num = sum((p - mx) * (q - my) for p, q in zip(x, y))
        den = math.sqrt(sum((p - mx) ** 2 for p in x) * sum((q - my) ** 2 for q in y))
        return num / den

    assert rmtbvqa.fractional_ranks(a) == ranks(a)
    assert rmtbvqa.srcc(a, b) == pytest.approx(pearson(ranks(a), ranks(b)), abs=1e-12)
    assert rmtbvqa.plcc(a, b) == pytest.approx(pearson(a, b), abs=1e-12)
    with pytest.raises(ValueError):
        rmtbvqa.srcc([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


def test_ridge_identity():
    w, b = rmtbvqa.ridge_fit([[1.0, 0.0], [0.0, 1.0]], [1.0, 2.0], 1.0, fit_intercept=False)
    assert w == pytest.approx([0.5, 1.0], abs=1e-12)
    assert b == 0.0


def test_psnr_and_schedule():
    assert rmtbvqa.psnr(bytes([10] * 64), bytes([10] * 64)) == 100.0
    assert rmtbvqa.psnr(bytes([0] * 64), bytes([255] * 64)) == pytest.approx(0.0, abs=1e-12)
    assert rmtbvqa.lr_at(0.0, 0.01, 2.0, 10) == 0.0
    assert rmtbvqa.lr_at(2.0, 0.01, 2.0, 10) == 0.01
    assert rmtbvqa.lr_at(10.0, 0.01, 2.0, 10) < 1e-12


def test_selfcheck_passes():
    checks = rmtbvqa.run_selfcheck()
    assert checks
    assert all(passed for _, passed, _ in checks), checks


def test_pipeline_end_to_end(tmp_path):
    cfg = rmtbvqa.config(
        synth_sources=3, synth_levels=[1, 3], rotations=[1], D=16, M=2, N=4, depth=1, heads=2,
        B=2, epochs=1, warmup_epochs=0.5, folds=3, repeats=1,
    )
    rmtbvqa.run_synth(tmp_path / "corpus", cfg)
    rows = rmtbvqa.run_extract(tmp_path / "corpus" / "videos.csv", tmp_path / "patches", cfg)
    assert rows > 0
    scored, inherited = rmtbvqa.run_label(
        tmp_path / "patches" / "manifest.csv", tmp_path / "patches" / "manifest.csv", cfg)
    assert scored > 0 and inherited > 0
    checkpoint, losses = rmtbvqa.run_train(tmp_path / "patches" / "manifest.csv", tmp_path / "train", cfg)
    assert losses and all(math.isfinite(x) for x in losses)
    ids, emb = rmtbvqa.run_embed(checkpoint, tmp_path / "corpus" / "videos.csv", tmp_path / "embed")
    assert len(ids) == len(emb) and len(emb[0]) == 16
    report = rmtbvqa.run_evaluate(tmp_path / "embed", tmp_path / "corpus" / "labels.csv", tmp_path / "eval", cfg)
    assert -1.0 <= report["overall_srcc"] <= 1.0

    frames = [[0.01 * (i + j) for j in range(16)] for i in range(9)]
    full = rmtbvqa.embed_frames(checkpoint, frames)
    assert full == rmtbvqa.embed_frames(checkpoint, frames[:8])
    assert len(full) == 16
