import numpy as np
import pytest

from pageseq.checkpoint import (BestCheckpointKeeper, CheckpointIOError,
                                load_checkpoint, save_checkpoint)


def test_round_trip_mixed_widths(tmp_path):
    params = {
        "a.weight": np.random.default_rng(0).standard_normal((3, 4)).astype(np.float32),
        "b.bias": np.random.default_rng(1).standard_normal(5),
        "scalarish": np.array([1.5], dtype=np.float64),
    }
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, params, {"epoch": 3})
    loaded, meta = load_checkpoint(path)
    assert meta == {"epoch": 3}
    assert set(loaded) == set(params)
    for name in params:
        assert loaded[name].dtype == params[name].dtype
        np.testing.assert_array_equal(loaded[name], params[name])


def test_save_is_deterministic(tmp_path):
    params = {"w": np.arange(6, dtype=np.float32).reshape(2, 3)}
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(p1, params, {"epoch": 0})
    save_checkpoint(p2, params, {"epoch": 0})
    assert p1.read_bytes() == p2.read_bytes()


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
    with pytest.raises(CheckpointIOError):
        load_checkpoint(path)


def test_missing_file_raises(tmp_path):
    with pytest.raises(CheckpointIOError):
        load_checkpoint(tmp_path / "absent.ckpt")


def test_keeper_saves_only_on_strict_improvement(tmp_path):
    keeper = BestCheckpointKeeper(tmp_path / "best.ckpt")
    params = {"w": np.zeros(2)}
    assert keeper.update(0.5, params, {"epoch": 0}) is True
    assert keeper.update(0.5, {"w": np.ones(2)}, {"epoch": 1}) is False
    # the tie kept the earlier snapshot
    loaded, meta = load_checkpoint(tmp_path / "best.ckpt")
    np.testing.assert_array_equal(loaded["w"], 0.0)
    assert meta["epoch"] == 0
    assert keeper.update(0.6, {"w": np.ones(2)}, {"epoch": 2}) is True
    _, meta = load_checkpoint(tmp_path / "best.ckpt")
    assert meta["epoch"] == 2
    assert meta["val_macro_f1"] == 0.6


def test_keeper_rejects_non_finite(tmp_path):
    keeper = BestCheckpointKeeper(tmp_path / "best.ckpt")
    with pytest.raises(ValueError):
        keeper.update(float("nan"), {"w": np.zeros(1)})
