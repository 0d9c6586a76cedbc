# SPDX-License-Identifier: Apache-2.0
"""Smoke tests for the python bindings: a few known values per area plus one
end-to-end CLI round trip through a temporary directory."""

import math
import os

import numpy as np
import pytest

import nbfusion as nbf


def test_activations_and_cross_entropy():
    assert nbf.sigmoid(np.array([0.0]))[0] == 0.5
    assert nbf.relu(np.array([-2.0, 3.0])).tolist() == [0.0, 3.0]
    loss, grad = nbf.softmax_cross_entropy(np.array([1.0, 1.0, 1.0]), 0)
    assert loss == pytest.approx(math.log(3.0), rel=1e-12)
    assert grad.shape == (3,)
    assert grad.sum() == pytest.approx(0.0, abs=1e-12)


def test_affine_matches_numpy():
    rng = np.random.default_rng(0)
    x = rng.normal(size=5)
    w = rng.normal(size=(3, 5))
    b = rng.normal(size=3)
    np.testing.assert_allclose(nbf.affine(x, w, b), w @ x + b, rtol=1e-12)


def test_lora_counts_and_merge():
    assert nbf.lora_param_count(512, 512, 8) == (8192, 262144)
    rng = np.random.default_rng(1)
    w0 = rng.normal(size=(4, 6))
    b = rng.normal(size=(4, 2))
    a = rng.normal(size=(2, 6))
    x = rng.normal(size=6)
    merged = nbf.merge_adapter(w0, b, a)
    np.testing.assert_allclose(merged, w0 + b @ a, rtol=1e-12)
    np.testing.assert_allclose(nbf.lora_apply(w0, b, a, x), merged @ x, atol=1e-12)


def test_cross_modal_attention_rows_normalize():
    rng = np.random.default_rng(2)
    out, attn = nbf.cross_modal_attention(rng.normal(size=(3, 8)), rng.normal(size=(5, 8)),
                                          rank=2, heads=2, seed=7)
    assert out.shape == (3, 8)
    assert len(attn) == 2
    for head in attn:
        np.testing.assert_allclose(np.asarray(head).sum(axis=1), np.ones(3), rtol=1e-6)


def test_prmf_forward_convexity():
    rng = np.random.default_rng(3)
    res = nbf.prmf_forward(rng.normal(size=16), rng.normal(size=24), seed=5)
    assert 0.0 < res["alpha"] < 1.0
    fused, proj = res["fused"], res["projected"]
    text = nbf.fuse(fused, fused, 1.0)  # trivially fused == its own combination
    assert fused.shape == proj.shape == text.shape


def test_curriculum_schedule_anchors():
    assert nbf.lambda_at(150, 0) == 0.3
    assert nbf.lambda_at(150, 149) == 1.0
    early = nbf.stage_for_epoch(150, 10)
    assert early["text_encoder"] is False and early["classifier"] is True
    late = nbf.stage_for_epoch(150, 120)
    assert late["visual_encoder"] is False and late["projection"] is True


def test_metrics_golden_values():
    cm = np.array([[5, 1, 0], [2, 3, 1], [0, 1, 7]], dtype=np.int64)
    rep = nbf.compute_metrics(cm)
    assert rep["acc"] == pytest.approx(0.75, abs=1e-12)
    assert rep["bacc"] == pytest.approx(0.7361, abs=1e-4)
    assert rep["kappa"] == pytest.approx(0.6212, abs=1e-4)
    assert rep["rec"] == pytest.approx(rep["acc"], abs=1e-12)

    scores = [[0.1, 0.9], [0.2, 0.8], [0.7, 0.3], [0.8, 0.2]]
    assert nbf.auroc(scores, [1, 1, 0, 0]) == 1.0


def test_corrupt_text_identity_and_norm():
    rng = np.random.default_rng(4)
    t = rng.normal(size=32).astype(np.float32)
    same = np.asarray(nbf.corrupt_text(t.tolist(), 0.0, seed=1), dtype=np.float32)
    np.testing.assert_array_equal(same, t)
    full = np.asarray(nbf.corrupt_text(t.tolist(), 1.0, seed=1))
    assert np.linalg.norm(full) == pytest.approx(np.linalg.norm(t), rel=1e-5)
    with pytest.raises(Exception):
        nbf.corrupt_text(t.tolist(), 1.5, seed=1)


def test_grad_check_full_model_passes():
    rep = nbf.grad_check_full_model(seed=42)
    assert rep["pass"] is True
    assert rep["max_rel_err"] < 1e-4


def test_cli_round_trip(tmp_path):
    data = str(tmp_path / "data")
    run = str(tmp_path / "run")
    code, out, err = nbf.run_cli(["gen-data", "--seed", "11", "--out", data,
                                  "--samples-per-class", "40"])
    assert code == 0, err
    records = nbf.load_embeddings(os.path.join(data, "train.nbemb"))
    assert len(records) == 96  # 3 * 40 * 0.8
    assert records[0]["image_vec"].shape == (512,)
    assert records[0]["text_vec"].shape == (768,)

    code, out, err = nbf.run_cli(["train", "--data", data, "--out", run,
                                  "--epochs", "3", "--batch-size", "16", "--seed", "5"])
    assert code == 0, err
    assert os.path.exists(os.path.join(run, "model.nbck"))
    assert os.path.exists(os.path.join(run, "metrics.txt"))

    code, out, err = nbf.run_cli(["eval", "--checkpoint", os.path.join(run, "model.nbck"),
                                  "--data", data])
    assert code == 0, err
    assert out.startswith("acc=")

    code, out, err = nbf.run_cli(["--bogus-flag"])
    assert code == 2
    assert err
