import json
import math
import os
from pathlib import Path

import numpy as np
import pytest

import sdgp

SOURCE = Path(os.environ.get("SDGP_SOURCE_DIR", Path(__file__).resolve().parents[2]))


def test_worked_example():
    out = sdgp.prune(np.array([[1.0, 7.0, -3.0, 2.0]], dtype=np.float32), n=2, m=4)
    assert out.tolist() == [[0.0, 7.0, -3.0, 0.0]]


def test_prune_keeps_shape_and_group_budget():
    rng = np.random.default_rng(0)
    grad = rng.standard_normal((3, 5, 5, 16)).astype(np.float32)
    for function in ("magnitude", "random", "rescaled_magnitude"):
        out = sdgp.prune(grad, n=2, m=8, function=function, seed=4)
        assert out.shape == grad.shape
        assert (np.count_nonzero(out.reshape(-1, 8), axis=1) <= 2).all()
    assert np.array_equal(sdgp.prune(grad, n=8, m=8), grad)


def test_rescaled_magnitude_preserves_channel_l1():
    rng = np.random.default_rng(1)
    grad = rng.uniform(-1, 1, (4096, 64)).astype(np.float32)
    out = sdgp.prune(grad, n=2, m=4, function="rescaled_magnitude")
    before = np.abs(grad).astype(np.float64).sum(axis=0)
    after = np.abs(out).astype(np.float64).sum(axis=0)
    assert np.max(np.abs(after - before) / before) <= 1e-5


def test_keep_set_breaks_ties_toward_lower_index():
    assert sdgp.keep_set([3.0, -3.0, 3.0, 1.0], 2) == [0, 1]


def test_invalid_group_is_a_config_error():
    with pytest.raises(sdgp.ConfigError):
        sdgp.prune(np.zeros((2, 6), dtype=np.float32), n=2, m=4)
    with pytest.raises(ValueError):
        sdgp.prune(np.zeros((2, 4), dtype=np.float32), n=5, m=4)


def test_speedup_and_tta():
    assert abs(sdgp.estimate_speedup(0.3317, 2, 4)["total_reduction_percent"] - 16.6) <= 0.05
    assert abs(sdgp.estimate_speedup_for_ratio(0.3317, 4)["total_reduction_percent"] - 24.9) <= 0.05
    stream = [{"wall_s": 100.0, "val_top1": v} for v in (50.0, 91.0, 93.0)]
    tta = sdgp.estimate_tta(stream, 90.0, 0.30, 1, 2)
    assert tta["epoch"] == 2 and tta["seconds"] == 170.0
    assert sdgp.estimate_tta(stream, 99.0, 0.30, 1, 2) is None


def test_train_writes_artifacts(tmp_path):
    config = {
        "seed": 2,
        "dataset": {"kind": "synthetic", "train_samples": 64, "val_samples": 32, "classes": 2, "height": 8, "width": 8},
        "model": {"layers": [
            {"type": "conv", "out": 8}, {"type": "relu"}, {"type": "maxpool"},
            {"type": "flatten"}, {"type": "linear", "out": 2},
        ]},
        "optimizer": {"epochs": 2, "batch_size": 16},
        "prune": {"function": "magnitude", "n": 2, "m": 4},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(config))
    resolved = sdgp.load_config(path)
    assert resolved["prune"]["n"] == 2
    history = sdgp.train(path, tmp_path / "out")
    assert [h["epoch"] for h in history] == [1, 2]
    assert all(math.isfinite(h["train_loss"]) for h in history)
    stored = sdgp.read_metrics(tmp_path / "out" / "metrics.csv")
    assert [h["val_top1"] for h in stored] == [h["val_top1"] for h in history]
    assert [h["train_loss"] for h in stored] == pytest.approx([h["train_loss"] for h in history], rel=1e-5)
    for name in ("metrics.csv", "metrics.jsonl", "checkpoint.bin", "config.snapshot.json"):
        assert (tmp_path / "out" / name).is_file()


def test_shipped_config_validates():
    resolved = sdgp.load_config(SOURCE / "configs" / "mnist_tinynet.json")
    assert resolved["model"]["preset"] == "tinynet"
