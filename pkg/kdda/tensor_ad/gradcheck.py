# kdda/tensor_ad/gradcheck.py
"""
Central finite-difference checks of recorded backward rules.
"""
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from aws_lambda_powertools import Logger

from kdda.tensor_ad import ops
from kdda.tensor_ad.tensor import DiffTensor, Tape, no_grad

logger = Logger(service="kdda", child=True)

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4
DEFAULT_INSTANCES = 100
# Gradients with a smaller norm are compared absolutely.
GRADIENT_FLOOR = 1e-6

# A builder draws one random instance: the scalar-valued function, its inputs
# and optionally per-input factors applied to the numeric gradient (gradient
# reversal deliberately disagrees with the forward function by -lambda).
CaseBuilder = Callable[[np.random.Generator], tuple]


@dataclass
class GradCase:
    name: str
    build: CaseBuilder


@dataclass
class CaseReport:
    name: str
    instances: int = 0
    worst_error: float = 0.0
    failures: int = 0
    errors: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.failures == 0 and not self.errors


def analytic_gradient(fn: Callable, inputs: list[DiffTensor]) -> list[np.ndarray]:
    for t in inputs:
        t.zero_grad()
    with Tape() as tape:
        out = fn(inputs)
        tape.backward(out)
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in inputs]


def numerical_gradient(fn: Callable, inputs: list[DiffTensor], step: float = DEFAULT_STEP) -> list[np.ndarray]:
    grads = []
    with no_grad():
        for t in inputs:
            original = t.data
            grad = np.zeros_like(original)
            for idx in np.ndindex(original.shape):
                plus = original.copy()
                plus[idx] += step
                t.data = plus
                f_plus = fn(inputs).item()
                minus = original.copy()
                minus[idx] -= step
                t.data = minus
                f_minus = fn(inputs).item()
                grad[idx] = (f_plus - f_minus) / (2.0 * step)
            t.data = original
            grads.append(grad)
    return grads


def relative_error(analytic: Sequence[np.ndarray], numeric: Sequence[np.ndarray]) -> float:
    """
    Norm-wise relative error over all inputs. The denominator never drops
    below GRADIENT_FLOOR, so near-zero gradients are held to an absolute
    error of tolerance * GRADIENT_FLOOR.
    """
    a = np.concatenate([g.reshape(-1) for g in analytic])
    n = np.concatenate([g.reshape(-1) for g in numeric])
    scale = max(np.linalg.norm(a), np.linalg.norm(n), GRADIENT_FLOOR)
    return float(np.linalg.norm(a - n) / scale)


def run_case(case: GradCase, seed: int, instances: int = DEFAULT_INSTANCES,
             tolerance: float = DEFAULT_TOLERANCE) -> CaseReport:
    report = CaseReport(case.name)
    rng = np.random.default_rng(seed)
    for _ in range(instances):
        try:
            built = case.build(rng)
            fn, inputs = built[0], built[1]
            numeric = numerical_gradient(fn, inputs)
            if len(built) > 2:
                numeric = [g * scale for g, scale in zip(numeric, built[2])]
            err = relative_error(analytic_gradient(fn, inputs), numeric)
        except Exception as e:
            report.errors.append(f"{type(e).__name__}: {e}")
            continue
        report.instances += 1
        report.worst_error = max(report.worst_error, err)
        if not err < tolerance:
            report.failures += 1
    logger.debug("Gradient case checked", extra={"case": case.name, "worst_error": report.worst_error})
    return report


def run_gradcheck(cases: Sequence[GradCase], seed: int = 0, instances: int = DEFAULT_INSTANCES,
                  tolerance: float = DEFAULT_TOLERANCE) -> list[CaseReport]:
    return [run_case(case, seed + i, instances, tolerance) for i, case in enumerate(cases)]


# Primitive cases. Inputs are kept away from kinks (relu at 0) so that
# central differences never straddle a non-differentiable point.

def _leaf(rng, shape, low=-1.0, high=1.0, away_from=None):
    data = rng.uniform(low, high, size=shape)
    if away_from is not None:
        data = np.where(np.abs(data - away_from) < 1e-2, data + 5e-2, data)
    return DiffTensor(data, requires_grad=True)


def _weights(rng, shape):
    return DiffTensor(rng.normal(size=shape), requires_grad=False)


def _shape(rng, ndim=2):
    return tuple(int(d) for d in rng.integers(1, 5, size=ndim))


def _binary(op):
    def build(rng):
        shape = _shape(rng)
        w = _weights(rng, shape)
        return (lambda xs: ops.reduce_sum(ops.multiply(op(xs[0], xs[1]), w)),
                [_leaf(rng, shape), _leaf(rng, shape)])
    return build


def _unary(op, **leaf_kwargs):
    def build(rng):
        shape = _shape(rng)
        w = _weights(rng, shape)
        return (lambda xs: ops.reduce_sum(ops.multiply(op(xs[0]), w)),
                [_leaf(rng, shape, **leaf_kwargs)])
    return build


def _build_matmul(rng):
    n, k, m = (int(d) for d in rng.integers(1, 5, size=3))
    w = _weights(rng, (n, m))
    return (lambda xs: ops.reduce_sum(ops.multiply(ops.matmul(xs[0], xs[1]), w)),
            [_leaf(rng, (n, k)), _leaf(rng, (k, m))])


def _build_matmul_chain(rng):
    a, b = _leaf(rng, (3, 4)), _leaf(rng, (4, 3))
    return (lambda xs: ops.reduce_mean(ops.matmul(ops.relu(ops.matmul(xs[0], xs[1])), xs[0])),
            [a, b])


def _build_reduce(op, axis_choice):
    def build(rng):
        shape = _shape(rng)
        axis = int(rng.integers(0, 2)) if axis_choice else None
        out_shape = shape if axis is None else tuple(d for i, d in enumerate(shape) if i != axis)
        w = _weights(rng, out_shape)
        return (lambda xs: ops.reduce_sum(ops.multiply(op(xs[0], axis=axis), w)),
                [_leaf(rng, shape)])
    return build


def _build_concat(rng):
    rows_a, rows_b, cols = (int(d) for d in rng.integers(1, 4, size=3))
    w = _weights(rng, (rows_a + rows_b, cols))
    return (lambda xs: ops.reduce_sum(ops.multiply(ops.concat([xs[0], xs[1]], axis=0), w)),
            [_leaf(rng, (rows_a, cols)), _leaf(rng, (rows_b, cols))])


def _build_reshape(rng):
    rows, cols = _shape(rng)
    w = _weights(rng, (cols, rows))
    return (lambda xs: ops.reduce_sum(ops.multiply(ops.reshape(xs[0], (cols, rows)), w)),
            [_leaf(rng, (rows, cols))])


def _build_expand(rng):
    rows, cols = _shape(rng)
    w = _weights(rng, (rows, cols))
    return (lambda xs: ops.reduce_sum(ops.multiply(ops.expand(xs[0], (rows, cols)), w)),
            [_leaf(rng, (cols,))])


def _build_squared_norm(rng):
    return (lambda xs: ops.squared_l2_norm(xs[0]), [_leaf(rng, _shape(rng))])


def _build_scalar_multiply(rng):
    c = float(rng.normal())
    return _unary(lambda x: ops.scalar_multiply(x, c))(rng)


def _build_softmax_temperature(convention):
    def build(rng):
        tau = float(rng.uniform(0.5, 3.0))
        return _unary(lambda x: ops.softmax_temperature(x, tau, convention))(rng)
    return build


def _build_grad_reverse(rng):
    lam = float(rng.uniform(0.0, 2.0))
    fn, inputs = _unary(lambda x: ops.grad_reverse(x, lam))(rng)
    return fn, inputs, [-lam]


def _build_transpose(rng):
    rows, cols = _shape(rng)
    w = _weights(rng, (cols, rows))
    return (lambda xs: ops.reduce_sum(ops.multiply(ops.transpose(xs[0]), w)),
            [_leaf(rng, (rows, cols))])


def _build_maximum(rng):
    shape = _shape(rng)
    floor = rng.uniform(-1.0, 0.0, size=shape[-1])
    w = _weights(rng, shape)
    x = rng.uniform(-1.5, 1.5, size=shape)
    x = np.where(np.abs(x - floor) < 1e-2, x + 5e-2, x)
    return (lambda xs: ops.reduce_sum(ops.multiply(ops.maximum(xs[0], floor), w)),
            [DiffTensor(x, requires_grad=True)])


def _build_pairwise(rng):
    n, m, d = (int(v) for v in rng.integers(1, 5, size=3))
    w = _weights(rng, (n, m))
    return (lambda xs: ops.reduce_sum(ops.multiply(ops.pairwise_sq_dists(xs[0], xs[1]), w)),
            [_leaf(rng, (n, d)), _leaf(rng, (m, d))])


PRIMITIVE_CASES = [
    GradCase("add", _binary(ops.add)),
    GradCase("subtract", _binary(ops.subtract)),
    GradCase("multiply", _binary(ops.multiply)),
    GradCase("scalar_multiply", _build_scalar_multiply),
    GradCase("matmul", _build_matmul),
    GradCase("matmul_chain", _build_matmul_chain),
    GradCase("transpose", _build_transpose),
    GradCase("relu", _unary(ops.relu, away_from=0.0)),
    GradCase("exp", _unary(ops.exp)),
    GradCase("log", _unary(ops.log, low=0.2, high=2.0)),
    GradCase("log_softmax", _unary(ops.log_softmax)),
    GradCase("softmax_temperature[paper-multiply]", _build_softmax_temperature(ops.LITERAL_MULTIPLY)),
    GradCase("softmax_temperature[standard-divide]", _build_softmax_temperature(ops.STANDARD_DIVIDE)),
    GradCase("grad_reverse", _build_grad_reverse),
    GradCase("maximum", _build_maximum),
    GradCase("reduce_sum", _build_reduce(ops.reduce_sum, axis_choice=True)),
    GradCase("reduce_mean", _build_reduce(ops.reduce_mean, axis_choice=True)),
    GradCase("squared_l2_norm", _build_squared_norm),
    GradCase("concat", _build_concat),
    GradCase("reshape", _build_reshape),
    GradCase("expand", _build_expand),
    GradCase("pairwise_sq_dists", _build_pairwise),
]
