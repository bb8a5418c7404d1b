# kdda/losses/gradcases.py
"""
Finite-difference cases for the loss functions, run alongside the primitive
cases by `gradcheck`. Bandwidths are fixed and inputs are kept clear of the
masking and margin boundaries.
"""
import numpy as np

from kdda.losses.distill import (
    MODE_FEATURE,
    MODE_LOGITS,
    FeatureDistiller,
    feature_distill,
    logits_distill,
    margin_relu,
    partial_l2,
    source_kd,
    target_kd,
)
from kdda.losses.models import KL_DIRECTIONS, KernelConfig, LossWeights, MarginState
from kdda.losses.uda import cross_entropy, domain_confusion, mmd_gaussian, teacher_uda_mmd, teacher_uda_revgrad
from kdda.nets import DomainClassifierSpec, Network, build_mlp_spec, init_regressor
from kdda.tensor_ad import LITERAL_MULTIPLY, STANDARD_DIVIDE, DiffTensor, multiply, reduce_sum
from kdda.tensor_ad.gradcheck import GradCase


def _leaf(rng, shape, low=-1.0, high=1.0):
    return DiffTensor(rng.uniform(low, high, size=shape), requires_grad=True)


def _away(values, boundary, gap=5e-2):
    return np.where(np.abs(values - boundary) < gap, values + 2 * gap, values)


def _small_network(rng, in_dim, classes, hidden=(3,), name="network"):
    return Network.create(build_mlp_spec(in_dim, hidden, classes), int(rng.integers(1 << 30)), name)


def _build_mmd(rng):
    n, m, d = (int(v) for v in rng.integers(1, 5, size=3))
    cfg = KernelConfig("fixed", tuple(float(b) for b in rng.uniform(0.5, 2.0, size=2)))
    return (lambda xs: mmd_gaussian(xs[0], xs[1], cfg), [_leaf(rng, (n, d)), _leaf(rng, (m, d))])


def _build_cross_entropy(rng):
    n, k = (int(v) for v in rng.integers(2, 5, size=2))
    labels = rng.integers(0, k, size=n)
    return (lambda xs: cross_entropy(xs[0], labels), [_leaf(rng, (n, k), -2.0, 2.0)])


def _build_teacher_mmd(rng):
    teacher = _small_network(rng, 2, 3)
    xs_, xt = rng.normal(size=(4, 2)), rng.normal(size=(3, 2))
    ys = rng.integers(0, 3, size=4)
    cfg = KernelConfig("fixed", (1.0,))
    weights = LossWeights(gamma=float(rng.uniform(0.0, 1.0)))
    return (lambda _: teacher_uda_mmd(teacher, xs_, ys, xt, weights, cfg), teacher.parameters())


def _build_domain_confusion(rng):
    lam = float(rng.uniform(0.1, 2.0))
    d = int(rng.integers(1, 4))
    head = Network.create(DomainClassifierSpec(d, (4,)).to_network_spec(), int(rng.integers(1 << 30)))
    inputs = [_leaf(rng, (3, d)), _leaf(rng, (2, d))]
    # The reversal layer makes the recorded gradient -lam times the forward derivative.
    return (lambda xs: domain_confusion(xs[0], xs[1], head, lam), inputs, [-lam, -lam])


def _build_teacher_revgrad(rng):
    # Only the parameters downstream of the reversal layer and the teacher's
    # head agree with the plain forward derivative.
    teacher = _small_network(rng, 2, 3)
    head = Network.create(DomainClassifierSpec(3, (4,)).to_network_spec(), int(rng.integers(1 << 30)))
    xs_, xt = rng.normal(size=(4, 2)), rng.normal(size=(3, 2))
    ys = rng.integers(0, 3, size=4)
    weights = LossWeights(alpha_dc=float(rng.uniform(0.1, 1.0)))
    last = teacher.state.params[len(teacher.spec.layers) - 1]
    inputs = head.parameters() + [last.weight, last.bias]
    return (lambda _: teacher_uda_revgrad(teacher, head, xs_, ys, xt, weights), inputs)


def _build_logits_distill(convention, direction):
    def build(rng):
        n, k = (int(v) for v in rng.integers(1, 5, size=2))
        tau = float(rng.uniform(0.5, 3.0))
        teacher = DiffTensor(rng.normal(size=(n, k)))
        return (lambda xs: logits_distill(xs[0], teacher, tau, convention, direction),
                [_leaf(rng, (n, k), -2.0, 2.0)])
    return build


def _build_margin_relu(rng):
    n, c = (int(v) for v in rng.integers(1, 5, size=2))
    margins = rng.uniform(-1.0, 0.0, size=c)
    w = DiffTensor(rng.normal(size=(n, c)))
    x = _away(rng.uniform(-1.5, 1.5, size=(n, c)), margins)
    return (lambda xs: reduce_sum(multiply(margin_relu(xs[0], margins), w)),
            [DiffTensor(x, requires_grad=True)])


def _build_partial_l2(rng):
    shape = tuple(int(v) for v in rng.integers(1, 5, size=2))
    teacher = _away(rng.uniform(-1.0, 1.0, size=shape), 0.0)
    student = _away(rng.uniform(-1.0, 1.0, size=shape), teacher)
    return (lambda xs: partial_l2(xs[0], xs[1]),
            [DiffTensor(teacher, requires_grad=True), DiffTensor(student, requires_grad=True)])


def _build_feature_distill(rng):
    n, s_dim, t_dim = (int(v) for v in rng.integers(1, 4, size=3))
    regressor = init_regressor(s_dim, t_dim, int(rng.integers(1 << 30)))
    teacher = DiffTensor(rng.normal(size=(n, t_dim)))
    margins = MarginState.empty(t_dim)
    margins.margins = rng.uniform(-1.0, 0.0, size=t_dim)
    student = _leaf(rng, (n, s_dim))
    return (lambda xs: feature_distill(teacher, xs[0], margins, regressor),
            [student, regressor.weight, regressor.bias])


def _build_kd(source: bool, mode: str):
    def build(rng):
        teacher = _small_network(rng, 2, 3, hidden=(4,), name="teacher")
        student = _small_network(rng, 2, 3, hidden=(3,), name="student")
        x = rng.normal(size=(4, 2))
        y = rng.integers(0, 3, size=4)
        weights = LossWeights(tau=float(rng.uniform(1.0, 3.0)), alpha_ce=0.5)
        distiller = FeatureDistiller.build(teacher, student, int(rng.integers(1 << 30))) if mode == MODE_FEATURE else None
        inputs = student.parameters() + (distiller.parameters() if distiller else [])
        if source:
            return (lambda _: source_kd(teacher, student, x, y, mode, weights, distiller), inputs)
        return (lambda _: target_kd(teacher, student, x, mode, weights, distiller), inputs)
    return build


LOSS_CASES = [
    GradCase("mmd_gaussian", _build_mmd),
    GradCase("cross_entropy", _build_cross_entropy),
    GradCase("teacher_uda_mmd", _build_teacher_mmd),
    GradCase("domain_confusion", _build_domain_confusion),
    GradCase("teacher_uda_revgrad", _build_teacher_revgrad),
    *[
        GradCase(f"logits_distill[{convention},{direction}]", _build_logits_distill(convention, direction))
        for convention in (LITERAL_MULTIPLY, STANDARD_DIVIDE)
        for direction in KL_DIRECTIONS
    ],
    GradCase("margin_relu", _build_margin_relu),
    GradCase("partial_l2", _build_partial_l2),
    GradCase("feature_distill", _build_feature_distill),
    GradCase("target_kd[logits]", _build_kd(False, MODE_LOGITS)),
    GradCase("target_kd[feature]", _build_kd(False, MODE_FEATURE)),
    GradCase("source_kd[logits]", _build_kd(True, MODE_LOGITS)),
    GradCase("source_kd[feature]", _build_kd(True, MODE_FEATURE)),
]
