import io
import json

import numpy as np
import pytest

from hprnn.errors import PersistenceError, VersionError
from hprnn.net_core import WEIGHT_NAMES
from hprnn.persistence import FORMAT_NAME, load_state, save_state


def _trained_like(state):
    state = state.with_pb([0.25], [-1.5])
    for name in WEIGHT_NAMES:
        state.lr[name] = state.lr[name] * 1.5
        state.prev_grad[name] = np.full_like(state.prev_grad[name], -0.125)
    return state


def test_save_then_load_is_bitwise_identical(tmp_path, small_state):
    state = _trained_like(small_state)
    path = save_state(state, tmp_path / "nested" / "state.npz")
    loaded = load_state(path)
    assert loaded.config == state.config
    for name in WEIGHT_NAMES:
        np.testing.assert_array_equal(getattr(loaded, name), getattr(state, name))
        np.testing.assert_array_equal(loaded.lr[name], state.lr[name])
        np.testing.assert_array_equal(loaded.prev_grad[name], state.prev_grad[name])
    np.testing.assert_array_equal(loaded.rho_d, state.rho_d)
    np.testing.assert_array_equal(loaded.rho_v, state.rho_v)


def test_save_leaves_no_temporary_files(tmp_path, small_state):
    save_state(small_state, tmp_path / "state.npz")
    save_state(small_state, tmp_path / "state.npz")
    assert [p.name for p in tmp_path.iterdir()] == ["state.npz"]


def test_truncated_file_is_a_persistence_error(tmp_path, small_state):
    path = save_state(small_state, tmp_path / "state.npz")
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(PersistenceError):
        load_state(path)


def test_garbage_file_is_a_persistence_error(tmp_path):
    path = tmp_path / "state.npz"
    path.write_bytes(b"not a weight file at all")
    with pytest.raises(PersistenceError):
        load_state(path)


def test_missing_file_is_a_persistence_error(tmp_path):
    with pytest.raises(PersistenceError, match="not found"):
        load_state(tmp_path / "absent.npz")


def _rewrite_header(path, **changes):
    with np.load(path, allow_pickle=False) as archive:
        arrays = {key: archive[key] for key in archive.files}
    header = json.loads(bytes(arrays["header"]).decode("utf-8"))
    header.update(changes)
    arrays["header"] = np.frombuffer(json.dumps(header).encode("utf-8"), dtype=np.uint8)
    buffer = io.BytesIO()
    np.savez(buffer, **arrays)
    path.write_bytes(buffer.getvalue())


def test_future_version_is_a_version_error(tmp_path, small_state):
    path = save_state(small_state, tmp_path / "state.npz")
    _rewrite_header(path, version=2)
    with pytest.raises(VersionError, match="version"):
        load_state(path)


def test_foreign_format_is_rejected(tmp_path, small_state):
    path = save_state(small_state, tmp_path / "state.npz")
    _rewrite_header(path, format="something-else")
    with pytest.raises(PersistenceError, match=FORMAT_NAME):
        load_state(path)


def test_inconsistent_shapes_are_rejected(tmp_path, small_state):
    path = save_state(small_state, tmp_path / "state.npz")
    _rewrite_header(path, config={**small_state.config.model_dump(), "n_d": 7})
    with pytest.raises(PersistenceError):
        load_state(path)


def test_unsupported_compression_method_is_a_persistence_error(tmp_path, small_state):
    path = save_state(small_state, tmp_path / "state.npz")
    data = bytearray(path.read_bytes())
    start = data.find(b"PK\x01\x02")
    assert start >= 0
    while start >= 0:
        data[start + 10:start + 12] = (77).to_bytes(2, "little")
        start = data.find(b"PK\x01\x02", start + 4)
    path.write_bytes(bytes(data))
    with pytest.raises(PersistenceError, match="corrupt"):
        load_state(path)


def test_config_violating_its_bounds_is_rejected_on_load(tmp_path, small_state):
    path = save_state(small_state, tmp_path / "state.npz")
    _rewrite_header(path, config={**small_state.config.model_dump(), "eta_min": 1.0, "eta_max": 0.5})
    with pytest.raises(PersistenceError, match="eta_min"):
        load_state(path)
