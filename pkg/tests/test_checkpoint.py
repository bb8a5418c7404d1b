# tests/test_checkpoint.py
import json
import struct

import numpy as np
import pytest

from kdda.nets import CheckpointError, NetworkSpec, build_mlp_spec, init_network, load_state, save_state


@pytest.fixture(scope="module")
def spec() -> NetworkSpec:
    return build_mlp_spec(2, [5], 3)


def test_round_trip_is_bit_exact(tmp_path, spec):
    state = init_network(spec, 11)
    path = save_state(state, spec, tmp_path / "teacher.ckpt")
    loaded_spec, loaded = load_state(path, expected_spec=spec)
    assert loaded_spec == spec
    assert loaded.init_seed == 11
    for a, b in zip(state.parameters(), loaded.parameters()):
        assert a.data.tobytes() == b.data.tobytes()


def test_byte_layout(tmp_path, spec):
    state = init_network(spec, 0)
    raw = save_state(state, spec, tmp_path / "n.ckpt").read_bytes()
    assert raw[:4] == b"KDDA"
    (header_len,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8:8 + header_len])
    assert header["format_version"] == 1
    assert header["seed"] == 0
    assert header["spec"] == spec.to_dict()
    values = np.frombuffer(raw[8 + header_len:], dtype="<f8")
    assert values.size == spec.param_count()
    # first layer weight is stored row-major before its bias
    np.testing.assert_array_equal(values[:10], state.params[0].weight.data.reshape(-1))


def test_empty_network_round_trips(tmp_path):
    spec = NetworkSpec((), (), 1)
    state = init_network(spec, 0)
    loaded_spec, loaded = load_state(save_state(state, spec, tmp_path / "empty.ckpt"))
    assert loaded_spec.layers == ()
    assert loaded.parameters() == []


def test_architecture_mismatch_names_the_layer(tmp_path, spec):
    path = save_state(init_network(spec, 0), spec, tmp_path / "n.ckpt")
    with pytest.raises(CheckpointError, match="layer 0: checkpoint has dense\\(2->5, relu\\), expected dense\\(2->7"):
        load_state(path, expected_spec=build_mlp_spec(2, [7], 3))


@pytest.mark.parametrize("damage,message", [
    (lambda raw: b"XXXX" + raw[4:], "bad magic"),
    (lambda raw: raw[:-8], "payload has"),
    (lambda raw: raw[:6], "not a checkpoint"),
])
def test_corrupt_files_are_rejected(tmp_path, spec, damage, message):
    path = save_state(init_network(spec, 0), spec, tmp_path / "n.ckpt")
    path.write_bytes(damage(path.read_bytes()))
    with pytest.raises(CheckpointError, match=message):
        load_state(path)


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError, match="not found"):
        load_state(tmp_path / "nope.ckpt")
