import numpy as np
import pytest

from heteroiot.snapshot import MAGIC, load_weights, save_weights


def test_round_trip_bitwise(tmp_path):
    rng = np.random.default_rng(0)
    state = {
        "layer.w": rng.normal(size=(3, 4)),
        "layer.b": rng.normal(size=4),
        "scalar": np.array(2.5),
        "cube": rng.normal(size=(2, 3, 2)),
    }
    path = tmp_path / "w.bin"
    save_weights(path, state)
    back = load_weights(path)
    assert set(back) == set(state)
    for name, arr in state.items():
        assert back[name].shape == arr.shape
        assert back[name].tobytes() == np.ascontiguousarray(arr).tobytes()


def test_magic_header_present(tmp_path):
    path = tmp_path / "w.bin"
    save_weights(path, {"a": np.zeros(2)})
    assert path.read_bytes().startswith(MAGIC)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "w.bin"
    path.write_bytes(b"not a snapshot\n{}\n")
    with pytest.raises(ValueError, match="magic"):
        load_weights(path)


def test_truncated_rejected(tmp_path):
    path = tmp_path / "w.bin"
    save_weights(path, {"a": np.arange(10.0)})
    blob = path.read_bytes()
    path.write_bytes(blob[:-8])
    with pytest.raises(ValueError, match="truncated"):
        load_weights(path)


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "w.bin"
    save_weights(path, {"a": np.arange(4.0)})
    path.write_bytes(path.read_bytes() + b"x")
    with pytest.raises(ValueError, match="trailing"):
        load_weights(path)
