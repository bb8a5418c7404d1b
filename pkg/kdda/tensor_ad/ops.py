# kdda/tensor_ad/ops.py
"""
Differentiable primitives. No implicit broadcasting: elementwise ops need
identical shapes, use `expand` or `reshape` to line operands up.
"""
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from kdda.tensor_ad.tensor import DiffTensor, ShapeMismatchError, make_result

LITERAL_MULTIPLY = "paper-multiply"
STANDARD_DIVIDE = "standard-divide"
SOFTMAX_CONVENTIONS = (LITERAL_MULTIPLY, STANDARD_DIVIDE)


def _require_same_shape(op: str, a: DiffTensor, b: DiffTensor) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{op}: shapes {a.shape} and {b.shape} are incompatible")


def _unreduce(grad: np.ndarray, shape: tuple, axis: Optional[int]) -> np.ndarray:
    """Spreads a reduced gradient back over the reduced axis."""
    if axis is None:
        return np.broadcast_to(grad, shape).copy()
    return np.broadcast_to(np.expand_dims(grad, axis), shape).copy()


# Arithmetic

def add(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    _require_same_shape("add", a, b)
    return make_result("add", a.data + b.data, (a, b), lambda g: (g, g))


def subtract(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    _require_same_shape("subtract", a, b)
    return make_result("subtract", a.data - b.data, (a, b), lambda g: (g, -g))


def multiply(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    """Elementwise product."""
    _require_same_shape("multiply", a, b)
    a_val, b_val = a.data, b.data
    return make_result("multiply", a_val * b_val, (a, b), lambda g: (g * b_val, g * a_val))


def scalar_multiply(a: DiffTensor, c: float) -> DiffTensor:
    c = float(c)
    return make_result("scalar_multiply", a.data * c, (a,), lambda g: (g * c,))


def matmul(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul: shapes {a.shape} and {b.shape} are incompatible")
    a_val, b_val = a.data, b.data
    return make_result(
        "matmul", a_val @ b_val, (a, b),
        lambda g: (g @ b_val.T, a_val.T @ g),
    )


def transpose(a: DiffTensor) -> DiffTensor:
    if a.data.ndim != 2:
        raise ShapeMismatchError(f"transpose: expected a matrix, got shape {a.shape}")
    return make_result("transpose", a.data.T.copy(), (a,), lambda g: (g.T,))


# Nonlinearities

def relu(a: DiffTensor) -> DiffTensor:
    mask = a.data > 0
    return make_result("relu", np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def maximum(a: DiffTensor, floor) -> DiffTensor:
    """
    Elementwise max(a, floor) against a constant. `floor` is a scalar or a
    vector matching the last axis of `a` (one value per channel).
    """
    floor = np.asarray(floor, dtype=np.float64)
    if floor.ndim > 1 or (floor.ndim == 1 and floor.shape[0] != a.shape[-1]):
        raise ShapeMismatchError(f"maximum: shapes {a.shape} and {floor.shape} are incompatible")
    mask = a.data > floor
    return make_result("maximum", np.where(mask, a.data, floor), (a,), lambda g: (g * mask,))


def exp(a: DiffTensor) -> DiffTensor:
    out = np.exp(a.data)
    return make_result("exp", out, (a,), lambda g: (g * out,))


def log(a: DiffTensor) -> DiffTensor:
    a_val = a.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a_val)
    return make_result("log", out, (a,), lambda g: (g / a_val,))


def log_softmax(a: DiffTensor) -> DiffTensor:
    """Row-wise log-softmax over the last axis, max-subtracted."""
    shifted = a.data - np.max(a.data, axis=-1, keepdims=True)
    out = shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))
    probs = np.exp(out)

    def backward_fn(g):
        return (g - probs * np.sum(g, axis=-1, keepdims=True),)

    return make_result("log_softmax", out, (a,), backward_fn)


def softmax(a: DiffTensor) -> DiffTensor:
    """Row-wise softmax over the last axis, max-subtracted."""
    shifted = a.data - np.max(a.data, axis=-1, keepdims=True)
    e = np.exp(shifted)
    probs = e / np.sum(e, axis=-1, keepdims=True)

    def backward_fn(g):
        return (probs * (g - np.sum(g * probs, axis=-1, keepdims=True)),)

    return make_result("softmax", probs, (a,), backward_fn)


def temperature_scale(tau: float, convention: str = STANDARD_DIVIDE) -> float:
    """Factor applied to logits: tau for the multiply convention, 1/tau for divide."""
    if convention not in SOFTMAX_CONVENTIONS:
        raise ValueError(f"Unknown softmax convention '{convention}'. Expected one of {SOFTMAX_CONVENTIONS}")
    if not tau > 0:
        raise ValueError(f"Temperature must be positive, got {tau}")
    return tau if convention == LITERAL_MULTIPLY else 1.0 / tau


def softmax_temperature(z: DiffTensor, tau: float, convention: str = STANDARD_DIVIDE) -> DiffTensor:
    """
    Temperature softmax over the last axis.

    `paper-multiply` evaluates exp(z_i * tau) which sharpens for tau > 1;
    `standard-divide` evaluates exp(z_i / tau), the usual softening.
    """
    return softmax(scalar_multiply(z, temperature_scale(tau, convention)))


def log_softmax_temperature(z: DiffTensor, tau: float, convention: str = STANDARD_DIVIDE) -> DiffTensor:
    return log_softmax(scalar_multiply(z, temperature_scale(tau, convention)))


def grad_reverse(t: DiffTensor, lam: float = 1.0) -> DiffTensor:
    """Identity forward; backward multiplies the upstream gradient by -lam."""
    if lam < 0:
        raise ValueError(f"grad_reverse: lambda must be non-negative, got {lam}")
    lam = float(lam)
    return make_result("grad_reverse", t.data.copy(), (t,), lambda g: (-lam * g,))


def detach(t: DiffTensor) -> DiffTensor:
    """Same values, cut from the graph."""
    return DiffTensor(t.data, requires_grad=False)


# Reductions and shape ops

def reduce_sum(a: DiffTensor, axis: Optional[int] = None) -> DiffTensor:
    shape = a.shape
    return make_result(
        "reduce_sum", np.sum(a.data, axis=axis), (a,),
        lambda g: (_unreduce(g, shape, axis),),
    )


def reduce_mean(a: DiffTensor, axis: Optional[int] = None) -> DiffTensor:
    shape = a.shape
    count = a.size if axis is None else shape[axis]
    if count == 0:
        raise ShapeMismatchError(f"reduce_mean: cannot average an empty axis of shape {shape}")
    return make_result(
        "reduce_mean", np.mean(a.data, axis=axis), (a,),
        lambda g: (_unreduce(g, shape, axis) / count,),
    )


def squared_l2_norm(a: DiffTensor) -> DiffTensor:
    a_val = a.data
    return make_result("squared_l2_norm", np.sum(a_val * a_val), (a,), lambda g: (2.0 * g * a_val,))


def concat(tensors: Sequence[DiffTensor], axis: int = 0) -> DiffTensor:
    if not tensors:
        raise ShapeMismatchError("concat: needs at least one tensor")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(
            d1 != d2 for i, (d1, d2) in enumerate(zip(ref, t.shape)) if i != axis % len(ref)
        ):
            raise ShapeMismatchError(f"concat: shapes {ref} and {t.shape} are incompatible")
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_result("concat", np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward_fn)


def reshape(a: DiffTensor, shape: Sequence[int]) -> DiffTensor:
    shape = tuple(shape)
    if int(np.prod(shape)) != a.size:
        raise ShapeMismatchError(f"reshape: shapes {a.shape} and {shape} are incompatible")
    original = a.shape
    return make_result("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(original),))


def expand(a: DiffTensor, shape: Sequence[int]) -> DiffTensor:
    """
    Explicit broadcast. `a` is left-padded with unit axes; every axis must
    then either match `shape` or be 1.
    """
    shape = tuple(shape)
    padded = (1,) * (len(shape) - a.data.ndim) + a.shape
    if len(padded) != len(shape) or any(p not in (1, s) for p, s in zip(padded, shape)):
        raise ShapeMismatchError(f"expand: shapes {a.shape} and {shape} are incompatible")
    original = a.shape
    summed = tuple(i for i, (p, s) in enumerate(zip(padded, shape)) if p == 1 and s != 1)

    def backward_fn(g):
        g = np.sum(g, axis=summed, keepdims=True) if summed else g
        return (g.reshape(original),)

    return make_result("expand", np.broadcast_to(a.data.reshape(padded), shape).copy(), (a,), backward_fn)


def pairwise_sq_dists(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    """Matrix of squared Euclidean distances between the rows of `a` and `b`."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeMismatchError(f"pairwise_sq_dists: shapes {a.shape} and {b.shape} are incompatible")
    a_val, b_val = a.data, b.data

    def backward_fn(g):
        grad_a = 2.0 * (a_val * g.sum(axis=1, keepdims=True) - g @ b_val)
        grad_b = 2.0 * (b_val * g.sum(axis=0)[:, None] - g.T @ a_val)
        return grad_a, grad_b

    return make_result("pairwise_sq_dists", cdist(a_val, b_val, "sqeuclidean"), (a, b), backward_fn)
