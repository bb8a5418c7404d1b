# tests/test_tensor_ad.py
import threading

import numpy as np
import pytest

from kdda.tensor_ad import (
    LITERAL_MULTIPLY,
    STANDARD_DIVIDE,
    DiffTensor,
    NonFiniteError,
    ShapeMismatchError,
    Tape,
    TapeError,
    add,
    backward,
    checked_mode,
    concat,
    detach,
    expand,
    grad_reverse,
    log,
    matmul,
    maximum,
    multiply,
    no_grad,
    pairwise_sq_dists,
    reduce_mean,
    reduce_sum,
    relu,
    softmax_temperature,
    squared_l2_norm,
)


def leaf(values) -> DiffTensor:
    return DiffTensor(values, requires_grad=True)


def test_product_rule_gradients():
    a, b = leaf([1.0, 2.0, 3.0]), leaf([4.0, 5.0, 6.0])
    with Tape() as tape:
        out = reduce_sum(multiply(a, b))
        tape.backward(out)
    assert out.item() == pytest.approx(32.0)
    np.testing.assert_allclose(a.grad, [4.0, 5.0, 6.0])
    np.testing.assert_allclose(b.grad, [1.0, 2.0, 3.0])


def test_matmul_gradients_match_closed_form():
    rng = np.random.default_rng(3)
    a, b = leaf(rng.normal(size=(3, 4))), leaf(rng.normal(size=(4, 2)))
    with Tape() as tape:
        tape.backward(reduce_sum(matmul(a, b)))
    np.testing.assert_allclose(a.grad, np.ones((3, 2)) @ b.data.T)
    np.testing.assert_allclose(b.grad, a.data.T @ np.ones((3, 2)))


def test_reused_input_accumulates():
    x = leaf([3.0])
    with Tape() as tape:
        tape.backward(reduce_sum(add(x, x)))
    np.testing.assert_allclose(x.grad, [2.0])


def test_leaf_grads_accumulate_across_passes():
    x = leaf([1.0, -1.0])
    for _ in range(2):
        with Tape() as tape:
            tape.backward(squared_l2_norm(x))
    np.testing.assert_allclose(x.grad, [4.0, -4.0])


def test_module_level_backward_uses_recording_tape():
    x = leaf([2.0])
    out = reduce_sum(multiply(x, x))
    backward(out)
    np.testing.assert_allclose(x.grad, [4.0])


def test_backward_rejects_non_scalar():
    x = leaf([1.0, 2.0])
    with Tape() as tape:
        y = add(x, x)
        with pytest.raises(TapeError, match="scalar"):
            tape.backward(y)


def test_backward_rejects_detached_output():
    x = leaf([1.0])
    with Tape() as tape:
        y = detach(reduce_sum(x))
        with pytest.raises(TapeError, match="detached"):
            tape.backward(y)


def test_consumed_tape_cannot_be_reused():
    x = leaf([1.0])
    with Tape() as tape:
        out = reduce_sum(x)
        tape.backward(out)
        with pytest.raises(TapeError, match="consumed"):
            tape.backward(out)
        with pytest.raises(TapeError, match="consumed"):
            reduce_sum(x)
        tape.reset()
        tape.backward(reduce_sum(x))
    np.testing.assert_allclose(x.grad, [2.0])


def test_no_grad_records_nothing():
    x = leaf([1.0, 2.0])
    with Tape() as tape:
        with no_grad():
            y = multiply(x, x)
        assert len(tape) == 0
    assert not y.requires_grad


def test_shape_mismatch_is_reported():
    with pytest.raises(ShapeMismatchError, match=r"\(2,\).*\(3,\)"):
        add(leaf([1.0, 2.0]), leaf([1.0, 2.0, 3.0]))
    with pytest.raises(ShapeMismatchError):
        matmul(leaf(np.ones((2, 3))), leaf(np.ones((2, 3))))


def test_checked_mode_flags_non_finite_values():
    with checked_mode(True):
        with pytest.raises(NonFiniteError, match="log"):
            log(leaf([-1.0]))
    with checked_mode(False):
        assert np.isnan(log(leaf([-1.0])).data[0])


@pytest.mark.parametrize("tau,convention,expected", [
    (1.0, STANDARD_DIVIDE, [0.7311, 0.2689]),
    (1.0, LITERAL_MULTIPLY, [0.7311, 0.2689]),
    (2.0, LITERAL_MULTIPLY, [0.8808, 0.1192]),
    (2.0, STANDARD_DIVIDE, [0.6225, 0.3775]),
])
def test_softmax_temperature_conventions(tau, convention, expected):
    probs = softmax_temperature(DiffTensor([[1.0, 0.0]]), tau, convention)
    np.testing.assert_allclose(probs.data[0], expected, atol=1e-4)


def test_softmax_temperature_rejects_unknown_convention():
    with pytest.raises(ValueError, match="convention"):
        softmax_temperature(DiffTensor([[1.0, 0.0]]), 2.0, "halve")


def test_grad_reverse_negates_and_scales():
    x = leaf([1.0, 2.0])
    with Tape() as tape:
        y = grad_reverse(x, 0.5)
        np.testing.assert_allclose(y.data, x.data)
        tape.backward(reduce_sum(y))
    np.testing.assert_allclose(x.grad, [-0.5, -0.5])


def test_relu_and_maximum_pass_gradient_only_above_floor():
    x = leaf([-1.0, 0.5, 2.0])
    with Tape() as tape:
        tape.backward(reduce_sum(relu(x)))
    np.testing.assert_allclose(x.grad, [0.0, 1.0, 1.0])

    y = leaf([[-3.0, 0.0], [1.0, -1.0]])
    with Tape() as tape:
        out = maximum(y, [-2.0, 0.5])
        tape.backward(reduce_sum(out))
    np.testing.assert_allclose(out.data, [[-2.0, 0.5], [1.0, 0.5]])
    np.testing.assert_allclose(y.grad, [[0.0, 0.0], [1.0, 0.0]])


def test_expand_sums_gradient_over_broadcast_axes():
    bias = leaf([1.0, 2.0, 3.0])
    with Tape() as tape:
        tape.backward(reduce_sum(expand(bias, (4, 3))))
    np.testing.assert_allclose(bias.grad, [4.0, 4.0, 4.0])


def test_concat_splits_gradient():
    a, b = leaf(np.ones((2, 2))), leaf(np.ones((1, 2)))
    with Tape() as tape:
        out = concat([a, b])
        tape.backward(reduce_sum(multiply(out, DiffTensor([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]))))
    np.testing.assert_allclose(a.grad, [[1.0, 1.0], [2.0, 2.0]])
    np.testing.assert_allclose(b.grad, [[3.0, 3.0]])


def test_pairwise_sq_dists_values():
    d = pairwise_sq_dists(DiffTensor([[0.0, 0.0], [1.0, 1.0]]), DiffTensor([[1.0, 0.0]]))
    np.testing.assert_allclose(d.data, [[1.0], [1.0]])


def test_reduce_mean_over_axis():
    x = leaf([[1.0, 2.0], [3.0, 4.0]])
    with Tape() as tape:
        m = reduce_mean(x, axis=0)
        np.testing.assert_allclose(m.data, [2.0, 3.0])
        tape.backward(reduce_sum(m))
    np.testing.assert_allclose(x.grad, np.full((2, 2), 0.5))


def test_tapes_on_separate_threads_are_independent():
    results = {}

    def worker(name, scale):
        x = leaf([scale])
        with Tape() as tape:
            tape.backward(squared_l2_norm(x))
        results[name] = (float(x.grad[0]), len(tape))

    threads = [threading.Thread(target=worker, args=(f"t{i}", float(i + 1))) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert results == {f"t{i}": (2.0 * (i + 1), 1) for i in range(4)}


@pytest.mark.parametrize("tau,convention", [
    (1.0, STANDARD_DIVIDE), (2.0, STANDARD_DIVIDE), (20.0, STANDARD_DIVIDE),
    (1.0, LITERAL_MULTIPLY), (2.0, LITERAL_MULTIPLY),
])
def test_softmax_temperature_is_stable_for_large_logits(tau, convention):
    z = np.random.default_rng(5).uniform(-100.0, 100.0, size=(200, 4))
    z[0] = [100.0, -100.0, 100.0, -100.0]
    probs = softmax_temperature(DiffTensor(z), tau, convention).data
    assert np.all(probs > 0.0)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, rtol=0.0, atol=1e-12)


def test_double_grad_reverse_is_the_identity():
    values = np.random.default_rng(6).normal(size=(4, 3))
    plain, twice = leaf(values), leaf(values.copy())
    with Tape() as tape:
        tape.backward(reduce_sum(multiply(plain, plain)))
    with Tape() as tape:
        y = grad_reverse(grad_reverse(twice, 1.0), 1.0)
        tape.backward(reduce_sum(multiply(y, y)))
    np.testing.assert_allclose(twice.grad, plain.grad, rtol=0.0, atol=1e-15)
