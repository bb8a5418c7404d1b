# kdda/trainers/learners.py
"""
The two optimizer regimes: a domain-adaptation learner per teacher and one
distillation learner for the student. Each owns its optimizer, so a step of
one never moves the other's parameters.
"""
from typing import Callable, Optional, Sequence

import numpy as np

from kdda.data import Batch
from kdda.losses import (
    MODE_FEATURE,
    FeatureDistiller,
    LossWeights,
    ObjectiveParts,
    cross_entropy,
    source_kd,
    target_kd,
    teacher_uda_mmd,
    teacher_uda_revgrad,
    total_stda_loss,
)
from kdda.nets import DomainClassifierSpec, Network, SpecError
from kdda.tensor_ad import DiffTensor, NonFiniteError, Tape, no_grad, scalar_multiply
from kdda.trainers.models import UDA_REVGRAD, NonFiniteLossError, TrainConfig, TrainingConfigError
from kdda.trainers.optimizer import SGD


def guarded(term: str, epoch: int, step: int, model: str, compute: Callable[[], DiffTensor]) -> DiffTensor:
    """Evaluates a loss term, turning NaN/Inf into a NonFiniteLossError naming it."""
    try:
        value = compute()
    except NonFiniteError as e:
        raise NonFiniteLossError(term, epoch, step, model) from e
    if not np.isfinite(value.data).all():
        raise NonFiniteLossError(term, epoch, step, model)
    return value


def _backward(tape: Tape, objective: DiffTensor, term: str, epoch: int, step: int, model: str) -> None:
    if not objective.requires_grad:
        return
    try:
        tape.backward(objective)
    except NonFiniteError as e:
        raise NonFiniteLossError(f"gradient of {term}", epoch, step, model) from e


class UdaLearner:
    """
    Adapts one network to a target domain with MMD or gradient reversal. When
    a step gets no target batch, it falls back to plain source cross-entropy.
    """
    def __init__(self, network: Network, cfg: TrainConfig, head_seed: int):
        self.network = network
        self.cfg = cfg
        self.domain_head: Optional[Network] = None
        if not network.spec.tap_layers:
            raise TrainingConfigError(f"{network.name}: domain adaptation needs a feature tap")
        if cfg.uda_method == UDA_REVGRAD:
            tap_dim = network.spec.tap_dim(network.spec.tap_layers[-1])
            try:
                head_spec = DomainClassifierSpec(tap_dim, tuple(cfg.domain_hidden)).to_network_spec()
            except SpecError as e:
                raise TrainingConfigError(str(e)) from e
            self.domain_head = Network.create(head_spec, head_seed, f"{network.name}_domain_head")
        params = network.parameters() + (self.domain_head.parameters() if self.domain_head else [])
        self.optimizer = SGD(params, cfg.teacher_optimizer)

    def loss(self, source: Batch, target: Optional[Batch], weights: LossWeights) -> DiffTensor:
        if target is None:
            return cross_entropy(self.network.logits(source.features), source.labels)
        if self.domain_head is not None:
            return teacher_uda_revgrad(self.network, self.domain_head, source.features, source.labels,
                                       target.features, weights)
        return teacher_uda_mmd(self.network, source.features, source.labels, target.features,
                               weights, self.cfg.kernel)

    def step(self, source: Batch, target: Optional[Batch], weights: LossWeights, scale: float,
             epoch: int, step: int) -> float:
        """Optimizes scale * L_TDA; returns the unscaled loss value."""
        term = "l_tda" if target is not None else "l_ce"
        self.optimizer.zero_grad()
        with Tape() as tape:
            loss = guarded(term, epoch, step, self.network.name, lambda: self.loss(source, target, weights))
            _backward(tape, scalar_multiply(loss, scale), term, epoch, step, self.network.name)
        self.optimizer.step()
        return loss.item()


class StudentLearner:
    """
    Distills one or more teachers into the student. Feature mode keeps one
    FeatureDistiller (regressors and margins) per teacher.
    """
    def __init__(self, student: Network, teachers: Sequence[Network], cfg: TrainConfig,
                 regressor_seeds: Sequence[int]):
        self.student = student
        self.cfg = cfg
        self.distillers: list[Optional[FeatureDistiller]] = [None] * len(teachers)
        if cfg.kd_mode == MODE_FEATURE:
            try:
                self.distillers = [
                    FeatureDistiller.build(t, student, seed, cfg.margin_mode, cfg.margin_momentum)
                    for t, seed in zip(teachers, regressor_seeds)
                ]
            except ValueError as e:
                raise TrainingConfigError(str(e)) from e
        params = student.parameters() + [p for d in self.distillers if d for p in d.parameters()]
        self.optimizer = SGD(params, cfg.student_optimizer)

    def observe(self, index: int, teacher: Network, *feature_batches: np.ndarray) -> None:
        """Folds teacher features into the margin statistics of teacher `index`."""
        distiller = self.distillers[index]
        if distiller is None:
            return
        with no_grad():
            for x in feature_batches:
                distiller.observe(teacher.forward(x)[1])

    def step(self, index: int, teacher: Network, source: Optional[Batch], target: Optional[Batch],
             weights: LossWeights, beta: float, epoch: int, step: int) -> dict[str, float]:
        """
        Optimizes beta * (L_TKD + L_SKD) against teacher `index`; a missing
        batch drops its term. Returns the unscaled term values.
        """
        distiller = self.distillers[index]
        name = self.student.name
        mode = self.cfg.kd_mode
        values: dict[str, float] = {}
        self.optimizer.zero_grad()
        with Tape() as tape:
            l_tkd = l_skd = 0.0
            if target is not None:
                l_tkd = guarded("l_tkd", epoch, step, name,
                                lambda: target_kd(teacher, self.student, target.features, mode, weights, distiller))
                values["l_tkd"] = l_tkd.item()
            if source is not None:
                l_skd = guarded("l_skd", epoch, step, name,
                                lambda: source_kd(teacher, self.student, source.features, source.labels,
                                                  mode, weights, distiller))
                values["l_skd"] = l_skd.item()
            _, objective = total_stda_loss(ObjectiveParts(0.0, l_tkd, l_skd, index), beta)
            if isinstance(objective, DiffTensor):
                _backward(tape, objective, "student objective", epoch, step, name)
        self.optimizer.step()
        return values
