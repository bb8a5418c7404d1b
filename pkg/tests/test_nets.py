# tests/test_nets.py
import numpy as np
import pytest

from kdda.nets import (
    DenseLayer,
    DomainClassifierSpec,
    Network,
    NetworkSpec,
    SpecError,
    apply_regressor,
    build_mlp_spec,
    forward,
    init_network,
    init_regressor,
)
from kdda.tensor_ad import DiffTensor, ShapeMismatchError, Tape, reduce_sum, relu


@pytest.fixture(scope="module")
def spec() -> NetworkSpec:
    return build_mlp_spec(2, [8, 6], 3)


def test_build_mlp_spec_defaults(spec: NetworkSpec):
    assert [l.describe() for l in spec.layers] == [
        "dense(2->8, relu)", "dense(8->6, relu)", "dense(6->3, none)",
    ]
    assert spec.tap_layers == (1,)
    assert spec.tap_dim(1) == 6
    assert spec.param_count() == (2 * 8 + 8) + (8 * 6 + 6) + (6 * 3 + 3)


def test_spec_rejects_broken_chains():
    with pytest.raises(SpecError, match="does not chain"):
        NetworkSpec((DenseLayer(2, 4), DenseLayer(5, 2, "none")), (), 2)
    with pytest.raises(SpecError, match="final layer"):
        NetworkSpec((DenseLayer(2, 4), DenseLayer(4, 2, "relu")), (), 2)
    with pytest.raises(SpecError, match="tap layer 5"):
        build_mlp_spec(2, [4], 2, tap_layers=[5])


def test_spec_dict_round_trip(spec: NetworkSpec):
    assert NetworkSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(SpecError, match="malformed"):
        NetworkSpec.from_dict({"layers": [[2, 3]], "tap_layers": [], "class_count": 3})


def test_init_is_deterministic(spec: NetworkSpec):
    a, b, c = init_network(spec, 7), init_network(spec, 7), init_network(spec, 8)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert pa.data.tobytes() == pb.data.tobytes()
    assert not np.array_equal(a.params[0].weight.data, c.params[0].weight.data)
    assert all(np.all(p.bias.data == 0.0) for p in a.params.values())


def test_forward_matches_hand_rolled_evaluation(spec: NetworkSpec):
    state = init_network(spec, 3)
    x = np.random.default_rng(0).normal(size=(5, 2))
    logits, taps = forward(state, spec, x)

    h = x
    expected_tap = None
    for i, layer in enumerate(spec.layers):
        z = h @ state.params[i].weight.data + state.params[i].bias.data
        if i == 1:
            expected_tap = z
        h = np.maximum(z, 0.0) if layer.activation == "relu" else z
    np.testing.assert_allclose(logits.data, h, atol=1e-12)
    np.testing.assert_allclose(taps[1].data, expected_tap, atol=1e-12)


def test_forward_rejects_wrong_width(spec: NetworkSpec):
    with pytest.raises(ShapeMismatchError, match="input width 2"):
        forward(init_network(spec, 0), spec, np.zeros((4, 3)))


def test_network_gradients_reach_every_parameter(spec: NetworkSpec):
    net = Network.create(spec, 1, "teacher")
    x = DiffTensor(np.random.default_rng(1).normal(size=(6, 2)))
    with Tape() as tape:
        tape.backward(reduce_sum(net.logits(x)))
    assert all(p.grad is not None for p in net.parameters())
    assert len(net.parameters()) == 2 * len(spec.layers)


def test_network_copy_is_independent(spec: NetworkSpec):
    net = Network.create(spec, 1, "teacher")
    clone = net.copy("clone")
    clone.state.params[0].weight.data = clone.state.params[0].weight.data + 1.0
    assert clone.name == "clone"
    assert not np.array_equal(net.state.params[0].weight.data, clone.state.params[0].weight.data)


def test_predict_returns_class_indices(spec: NetworkSpec):
    predictions = Network.create(spec, 2).predict(np.zeros((4, 2)))
    assert predictions.shape == (4,)
    assert set(predictions.tolist()) <= {0, 1, 2}


def test_domain_classifier_spec():
    head = DomainClassifierSpec(6).to_network_spec()
    assert [l.describe() for l in head.layers] == [
        "dense(6->64, relu)", "dense(64->64, relu)", "dense(64->2, none)",
    ]
    assert head.class_count == 2


def test_regressor_maps_student_width_to_teacher_width():
    reg = init_regressor(4, 6, seed=0)
    out = apply_regressor(reg, DiffTensor(np.ones((3, 4))))
    assert out.shape == (3, 6)
    with pytest.raises(ShapeMismatchError):
        apply_regressor(reg, DiffTensor(np.ones((3, 5))))


def test_init_weights_are_centered_he_normal():
    wide = build_mlp_spec(100, [100], 2)
    weights = init_network(wide, 0).params[0].weight.data.reshape(-1)
    assert weights.size == 10_000
    std = np.sqrt(2.0 / 100)
    assert abs(weights.mean()) < 3.0 * std / np.sqrt(weights.size)
    assert weights.std() == pytest.approx(std, rel=0.05)


def test_relu_of_every_tap_is_the_next_layer_input():
    tapped = build_mlp_spec(2, [5, 4, 3], 2, tap_layers=(0, 1, 2))
    state = init_network(tapped, 4)
    x = np.random.default_rng(3).normal(size=(7, 2))
    logits, taps = forward(state, tapped, x)
    outputs = [taps[1].data, taps[2].data, logits.data]
    for i, expected in enumerate(outputs):
        following = state.params[i + 1]
        z = relu(taps[i]).data @ following.weight.data + following.bias.data
        np.testing.assert_array_equal(z, expected)
