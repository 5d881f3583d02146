import numpy as np
import pytest

from conftest import DIMS
from mmdfn.checkpoint import Checkpoint, CheckpointError, load_checkpoint, same_params, save_checkpoint
from mmdfn.model import ModelConfig, init_params


@pytest.fixture
def ckpt(rng):
    cfg = ModelConfig(d=6, K=2, modalities=("a", "t"), classes=("p", "q", "r"), loss="cross_entropy")
    params = init_params(cfg, DIMS, 3, seed=9)
    # awkward values: subnormals, signed zero, extremes
    params["clf.b"] = np.array([5e-324, -0.0, 1.7976931348623157e308])
    return Checkpoint(cfg, params, cfg.classes, dict(DIMS), 9, extra={"best_epoch": 4})


def test_round_trip_bit_exact(tmp_path, ckpt):
    save_checkpoint(ckpt, tmp_path / "ck")
    back = load_checkpoint(tmp_path / "ck")
    assert same_params(back.params, ckpt.params)
    assert np.signbit(back.params["clf.b"][1])
    assert back.config == ckpt.config
    assert back.class_names == ckpt.class_names
    assert back.feature_dims == ckpt.feature_dims
    assert back.seed == 9 and back.extra == {"best_epoch": 4}


def test_manifest_layout(tmp_path, ckpt):
    save_checkpoint(ckpt, tmp_path / "ck")
    text = (tmp_path / "ck" / "manifest.txt").read_text()
    assert text.startswith("format: mmdfn-checkpoint/1\n")
    params = [line.split()[1] for line in text.splitlines() if line.startswith("param: ")]
    assert params == list(ckpt.params)
    assert "param: clf.W 3x24" in text
    size = (tmp_path / "ck" / "params.bin").stat().st_size
    assert size == 8 * sum(v.size for v in ckpt.params.values())


def test_corruption_detected(tmp_path, ckpt):
    save_checkpoint(ckpt, tmp_path / "ck")
    blob = tmp_path / "ck" / "params.bin"
    data = bytearray(blob.read_bytes())
    data[10] ^= 1
    blob.write_bytes(bytes(data))
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(tmp_path / "ck")


def test_not_a_checkpoint(tmp_path):
    with pytest.raises(CheckpointError, match="not a checkpoint"):
        load_checkpoint(tmp_path)


def test_same_params_is_strict():
    a = {"w": np.array([0.0, 1.0])}
    assert same_params(a, {"w": np.array([0.0, 1.0])})
    assert not same_params(a, {"w": np.array([-0.0, 1.0])})
    assert not same_params(a, {"v": np.array([0.0, 1.0])})
