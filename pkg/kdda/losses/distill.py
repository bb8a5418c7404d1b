# kdda/losses/distill.py
"""
Distillation losses optimized by the student, and the per-step objectives.
"""
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from kdda.losses.models import (
    KL_TEACHER_STUDENT,
    MARGIN_COUNT,
    MARGIN_EMA,
    LossInputError,
    LossWeights,
    MarginState,
    ObjectiveParts,
)
from kdda.losses.uda import cross_entropy
from kdda.nets import Network, RegressorState, apply_regressor, init_regressor
from kdda.tensor_ad import (
    DiffTensor,
    ShapeMismatchError,
    add,
    detach,
    exp,
    log_softmax_temperature,
    maximum,
    multiply,
    no_grad,
    reduce_sum,
    scalar_multiply,
    subtract,
)

MODE_LOGITS = "logits"
MODE_FEATURE = "feature"
DISTILL_MODES = (MODE_LOGITS, MODE_FEATURE)


def logits_distill(student_logits: DiffTensor, teacher_logits: DiffTensor, tau: float,
                   convention: str, direction: str = KL_TEACHER_STUDENT) -> DiffTensor:
    """
    Batch-mean KL divergence between temperature-softened distributions.
    The teacher side never receives gradient. No tau^2 rescaling.
    """
    if not tau > 0:
        raise LossInputError(f"logits_distill: tau must be positive, got {tau}")
    if student_logits.shape != teacher_logits.shape or student_logits.data.ndim != 2:
        raise ShapeMismatchError(
            f"logits_distill: student {student_logits.shape} and teacher {teacher_logits.shape} logits differ"
        )
    n = student_logits.shape[0]
    log_p_student = log_softmax_temperature(student_logits, tau, convention)
    log_p_teacher = log_softmax_temperature(detach(teacher_logits), tau, convention)

    if direction == KL_TEACHER_STUDENT:
        p_teacher = DiffTensor(np.exp(log_p_teacher.data))
        divergence = multiply(p_teacher, subtract(log_p_teacher, log_p_student))
    else:
        divergence = multiply(exp(log_p_student), subtract(log_p_student, log_p_teacher))
    return scalar_multiply(reduce_sum(divergence), 1.0 / n)


def _margin_values(margins: Union[MarginState, np.ndarray, float], channels: int) -> np.ndarray:
    values = margins.margins if isinstance(margins, MarginState) else np.asarray(margins, dtype=np.float64)
    if values.ndim == 0:
        values = np.full(channels, float(values))
    if values.shape != (channels,):
        raise ShapeMismatchError(f"margin_relu: {values.shape[0]} margins for {channels} channels")
    return values


def margin_relu(x: DiffTensor, margins) -> DiffTensor:
    """max(x, m_c) per channel (last axis)."""
    return maximum(x, _margin_values(margins, x.shape[-1]))


def update_margins(state: MarginState, teacher_features) -> MarginState:
    """
    Folds the negative responses of an N x C batch into the running per-channel
    conditional mean. Mutates and returns `state`.
    """
    values = teacher_features.data if isinstance(teacher_features, DiffTensor) else np.asarray(teacher_features)
    if values.ndim != 2 or values.shape[1] != state.channels:
        raise ShapeMismatchError(f"update_margins: features {values.shape} for {state.channels} channels")

    negative = values < 0
    batch_count = negative.sum(axis=0)
    batch_sum = np.where(negative, values, 0.0).sum(axis=0)
    seen = batch_count > 0

    if state.mode == MARGIN_COUNT:
        total = state.negative_counts + batch_count
        weighted = state.margins * state.negative_counts + batch_sum
        state.margins = np.divide(weighted, total, out=np.zeros_like(state.margins), where=total > 0)
    elif state.mode == MARGIN_EMA:
        batch_mean = np.divide(batch_sum, batch_count, out=np.zeros_like(batch_sum), where=seen)
        first = seen & (state.negative_counts == 0)
        later = seen & (state.negative_counts > 0)
        margins = state.margins.copy()
        margins[first] = batch_mean[first]
        margins[later] = state.momentum * margins[later] + (1.0 - state.momentum) * batch_mean[later]
        state.margins = margins
    else:
        raise LossInputError(f"update_margins: unknown margin mode '{state.mode}'")

    state.negative_counts = state.negative_counts + batch_count
    return state


def partial_l2(f_teacher: DiffTensor, f_student: DiffTensor) -> DiffTensor:
    """
    Sum over components of (teacher - student)^2, except where
    student <= teacher <= 0, which contributes nothing.
    """
    if f_teacher.shape != f_student.shape:
        raise ShapeMismatchError(f"partial_l2: teacher {f_teacher.shape} and student {f_student.shape} differ")
    t, s = f_teacher.data, f_student.data
    keep = DiffTensor((~((s <= t) & (t <= 0))).astype(np.float64))
    diff = subtract(f_teacher, f_student)
    return reduce_sum(multiply(keep, multiply(diff, diff)))


def feature_distill(teacher_feats: DiffTensor, student_feats: DiffTensor, margins,
                    regressor: RegressorState) -> DiffTensor:
    """
    Partial L2 between margin-rectified teacher features and regressed student
    features. Unnormalized; FeatureDistiller applies the per-element weight.
    """
    target = margin_relu(detach(teacher_feats), margins)
    projected = apply_regressor(regressor, student_feats)
    if projected.shape != target.shape:
        raise ShapeMismatchError(
            f"feature_distill: regressed student {projected.shape} vs teacher {target.shape}"
        )
    return partial_l2(target, projected)


@dataclass
class FeaturePair:
    teacher_tap: int
    student_tap: int
    regressor: RegressorState
    margins: MarginState


@dataclass
class FeatureDistiller:
    """
    Teacher and student taps paired in sorted order, each pair with its own
    regressor and margin statistics.
    """
    pairs: list[FeaturePair] = field(default_factory=list)

    @classmethod
    def build(cls, teacher: Network, student: Network, seed: int,
              margin_mode: str = MARGIN_COUNT, momentum: float = 0.9) -> "FeatureDistiller":
        teacher_taps, student_taps = teacher.spec.tap_layers, student.spec.tap_layers
        if not teacher_taps or len(teacher_taps) != len(student_taps):
            raise LossInputError(
                f"feature distillation needs matching tap counts, teacher has {len(teacher_taps)} "
                f"and student has {len(student_taps)}"
            )
        pairs = []
        for k, (t_tap, s_tap) in enumerate(zip(teacher_taps, student_taps)):
            t_dim, s_dim = teacher.spec.tap_dim(t_tap), student.spec.tap_dim(s_tap)
            pairs.append(FeaturePair(
                t_tap, s_tap,
                init_regressor(s_dim, t_dim, seed + k),
                MarginState.empty(t_dim, margin_mode, momentum),
            ))
        return cls(pairs)

    def parameters(self) -> list[DiffTensor]:
        return [p for pair in self.pairs for p in pair.regressor.parameters()]

    def observe(self, teacher_features: dict) -> None:
        for pair in self.pairs:
            update_margins(pair.margins, teacher_features[pair.teacher_tap])

    def loss(self, teacher_features: dict, student_features: dict, weight: float = 1.0) -> DiffTensor:
        """
        Sum over pairs of weight times the partial L2 divided by the element
        count (rows x teacher channels) of that pair.
        """
        total = None
        for pair in self.pairs:
            teacher_tap = teacher_features[pair.teacher_tap]
            term = feature_distill(teacher_tap, student_features[pair.student_tap], pair.margins, pair.regressor)
            term = scalar_multiply(term, weight / max(teacher_tap.size, 1))
            total = term if total is None else add(total, term)
        return total


def _distill(teacher: Network, student: Network, batch, mode: str, weights: LossWeights,
             distiller: Optional[FeatureDistiller]) -> tuple[DiffTensor, DiffTensor]:
    if mode not in DISTILL_MODES:
        raise LossInputError(f"unknown distillation mode '{mode}', expected one of {DISTILL_MODES}")
    with no_grad():
        teacher_logits, teacher_feats = teacher.forward(batch)
    student_logits, student_feats = student.forward(batch)

    if mode == MODE_LOGITS:
        loss = logits_distill(student_logits, teacher_logits, weights.tau,
                              weights.softmax_convention, weights.kl_direction)
    else:
        if distiller is None:
            raise LossInputError("feature distillation needs a FeatureDistiller")
        loss = distiller.loss(teacher_feats, student_feats, weights.feature_weight)
    return loss, student_logits


def target_kd(teacher: Network, student: Network, target_x, mode: str, weights: LossWeights,
              distiller: Optional[FeatureDistiller] = None) -> DiffTensor:
    """Distillation on the unlabeled target batch."""
    loss, _ = _distill(teacher, student, target_x, mode, weights, distiller)
    return loss


def source_kd(teacher: Network, student: Network, source_x, source_y, mode: str, weights: LossWeights,
              distiller: Optional[FeatureDistiller] = None) -> DiffTensor:
    """Distillation on the source batch plus alpha_ce times the student's source cross-entropy."""
    loss, student_logits = _distill(teacher, student, source_x, mode, weights, distiller)
    return add(loss, scalar_multiply(cross_entropy(student_logits, source_y), weights.alpha_ce))


def _scaled(value, factor: float):
    return scalar_multiply(value, factor) if isinstance(value, DiffTensor) else float(value) * factor


def _summed(a, b):
    if isinstance(a, DiffTensor) or isinstance(b, DiffTensor):
        a = a if isinstance(a, DiffTensor) else DiffTensor(a)
        b = b if isinstance(b, DiffTensor) else DiffTensor(b)
        return add(a, b)
    return float(a) + float(b)


def _check_beta(beta: float) -> None:
    if not 0.0 <= beta <= 1.0:
        raise LossInputError(f"beta must lie in [0, 1], got {beta}")


def total_stda_loss(parts: ObjectiveParts, beta: float) -> tuple:
    """(teacher objective, student objective) = ((1-beta) L_TDA, beta (L_TKD + L_SKD))."""
    _check_beta(beta)
    return _scaled(parts.l_tda, 1.0 - beta), _scaled(_summed(parts.l_tkd, parts.l_skd), beta)


def total_mtda_loss(parts: Sequence[ObjectiveParts], beta: float) -> list[tuple]:
    """Per teacher i, the objective pair built from its own target T_i."""
    return [total_stda_loss(p, beta) for p in parts]
