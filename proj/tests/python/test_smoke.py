import math
import os
import subprocess
from pathlib import Path

import numpy as np
import pytest

import spml_lab

CONFIGS = Path(os.environ.get("SPML_LAB_CONFIGS", Path(__file__).resolve().parents[2] / "configs"))
CLI = os.environ.get("SPML_LAB_CLI")


def test_loss_branches():
    assert spml_lab.loss_confirmed_positive(0.5) == pytest.approx(math.log(2))
    assert spml_lab.loss_negative_pseudo(1 - math.exp(-3)) == pytest.approx(3.0)
    assert spml_lab.loss_positive_pseudo(0.9, q3=0.5) == pytest.approx(0.5 * -math.log(0.1) + 0.5 * -math.log(0.9))
    assert spml_lab.loss_undefined(0.3, 0.0, q1=1.0) == pytest.approx(0.3)


def test_gpr_reduces_to_gr_without_pseudo_labels():
    rng = np.random.default_rng(0)
    logits = rng.uniform(-4, 4, size=(5, 7))
    positives = [0, 3, 6, 1, 2]
    pseudo = np.zeros((5, 7), dtype=np.int32)
    gpr = spml_lab.gpr_loss_batch(logits, positives, pseudo, 0.2, 0.15, eta=0.0)
    gr = spml_lab.gr_loss_batch(logits, positives, 0.2, 0.15)
    assert gpr["total"] == pytest.approx(gr["total"], rel=1e-12)
    np.testing.assert_allclose(gpr["logit_gradient"], gr["logit_gradient"], rtol=1e-12)
    assert gpr["logit_gradient"].shape == (5, 7)


def test_bad_options_raise():
    with pytest.raises(KeyError):
        spml_lab.gr_loss_batch(np.zeros((1, 2)), [0], 0.1, 0.2, gamma=1.0)
    with pytest.raises(ValueError):
        spml_lab.temperature_softmax([1.0, 0.0], 0.0)


def test_softmax_and_aggregation():
    s = spml_lab.temperature_softmax([1.0, 0.0], 0.5)
    assert s[0] == pytest.approx(0.880797, abs=1e-6)
    assert spml_lab.aggregate_local([[0.7, 0.3], [0.2, 0.8]], 0.5) == [0.7, 0.8]
    assert spml_lab.aggregate_local([[0.7, 0.3], [0.2, 0.8]], 0.9) == [0.2, 0.3]


def test_ranking_metrics():
    assert spml_lab.average_precision([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0]) == pytest.approx(5 / 6)
    logits = np.array([[2.0, 1.0], [-1.0, 3.0]])
    truth = np.array([[1, 1], [0, 0]], dtype=np.uint8)
    assert spml_lab.mean_average_precision(logits, truth) == pytest.approx(0.75)


def test_score_map_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    evidence = rng.uniform(0, 2, size=(3, 4, 5)).astype(np.float32)
    blob = spml_lab.encode_score_map(evidence)
    assert blob[:4] == b"SSM1"
    assert len(blob) == 16 + 4 * evidence.size
    np.testing.assert_array_equal(spml_lab.decode_score_map(blob), evidence)
    path = tmp_path / "map.ssm1"
    spml_lab.save_score_map(path, evidence)
    np.testing.assert_array_equal(spml_lab.load_score_map(path), evidence)
    with pytest.raises(ValueError, match="offset 12"):
        spml_lab.decode_score_map(blob[:12] + b"\0\0\0\0" + blob[16:])


def test_train_from_config(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    first = spml_lab.train(CONFIGS / "smoke.json")
    assert list(tmp_path.iterdir()) == []
    assert 0.0 < first <= 1.0
    assert spml_lab.train(CONFIGS / "smoke.json", tmp_path / "run") == first
    assert (tmp_path / "run" / "metrics.csv").exists()
    assert spml_lab.simulate(CONFIGS / "smoke.json", tmp_path / "world") == 120


@pytest.mark.skipif(CLI is None, reason="SPML_LAB_CLI not set")
def test_cli_exit_codes(tmp_path):
    ok = subprocess.run([CLI, "train", "--config", str(CONFIGS / "smoke.json"), "--out", str(tmp_path)],
                        capture_output=True, text=True)
    assert ok.returncode == 0, ok.stderr
    assert ok.stdout.startswith("mAP=")

    bad = tmp_path / "bad.json"
    bad.write_text('{"world": {"class_count": 1}, "train": {"method": "gpr_damp"}}')
    assert subprocess.run([CLI, "simulate", "--config", str(bad)], capture_output=True).returncode == 2
    assert subprocess.run([CLI, "train"], capture_output=True).returncode == 2
    assert subprocess.run([CLI, "frobnicate"], capture_output=True).returncode == 2
