# kdda/trainers/baselines.py
"""
Sequential orderings compared against joint training:

    uda_then_kd   adapt the teacher, then distill it on unlabeled target only
    kd_then_uda   train the teacher on source while distilling it, then adapt the student
    uda_only      adapt the compact network directly
    source_only   supervised source training of the compact network

Distillation phases optimize the joint student objective with the missing
term dropped: beta L_TKD after adaptation, beta L_SKD before it, with beta
following the run's schedule over the phase.
"""
from collections import defaultdict
from typing import Optional

from aws_lambda_powertools import Logger

from kdda.data import BatchPlan, DomainDataset, batches, paired_batches
from kdda.nets import Network, NetworkSpec
from kdda.trainers import seeds
from kdda.trainers.evaluation import evaluate_models
from kdda.trainers.joint import STUDENT_NAME, DomainSplits, split_domains
from kdda.trainers.learners import StudentLearner, UdaLearner
from kdda.trainers.models import (
    BASELINE_ORDERINGS,
    KD_THEN_UDA,
    SOURCE_ONLY,
    UDA_ONLY,
    UDA_THEN_KD,
    BaselineResult,
    MetricRecord,
    TrainConfig,
    TrainingConfigError,
)

logger = Logger(service="kdda", child=True)


class _Phase:
    """Epoch bookkeeping shared by every baseline phase."""
    def __init__(self, cfg: TrainConfig, splits: DomainSplits, models: list[Network], epoch_offset: int = 0):
        self.cfg = cfg
        self.splits = splits
        self.models = models
        self.epoch_offset = epoch_offset
        self.plan = BatchPlan(cfg.batch_size, seeds.derive_seed(cfg.seed, seeds.BATCHES))
        self.schedule = cfg.schedule()
        self.metrics: list[MetricRecord] = []

    def beta(self, epoch: int, step: int, steps: int) -> float:
        return self.schedule.beta_for_step(epoch, step, steps)

    def finish_epoch(self, epoch: int, sums: dict, steps: int) -> None:
        if (epoch + 1) % self.cfg.eval_every and epoch + 1 != self.cfg.epochs:
            return
        losses = {model: {k: v / max(steps, 1) for k, v in terms.items()} for model, terms in sums.items()}
        records = evaluate_models(epoch + self.epoch_offset, self.models, self.splits.holdouts, losses)
        self.metrics.extend(records)
        logger.info("Epoch complete", extra={
            "epoch": epoch + self.epoch_offset, "losses": losses,
            "accuracy": {f"{r.model}/{r.domain}": r.accuracy for r in records},
        })


def _run_uda(learner: UdaLearner, splits: DomainSplits, cfg: TrainConfig, use_target: bool,
             epoch_offset: int = 0) -> list[MetricRecord]:
    """Adaptation (or plain source training when `use_target` is off) of one network."""
    phase = _Phase(cfg, splits, [learner.network], epoch_offset)
    source_view = splits.source_train.source_view()
    streams = [source_view, splits.target_trains[0].target_view()] if use_target else [source_view]
    for epoch in range(cfg.epochs):
        sums = defaultdict(lambda: defaultdict(float))
        steps = 0
        for step, batch in enumerate(paired_batches(streams, phase.plan.for_epoch(epoch))):
            src, tgt = batch if use_target else (batch[0], None)
            sums[learner.network.name]["l_tda" if use_target else "l_ce"] += learner.step(
                src, tgt, cfg.weights, 1.0, epoch, step
            )
            steps += 1
        phase.finish_epoch(epoch, sums, steps)
    return phase.metrics


def _uda_then_kd(teacher_spec, student_spec, splits, cfg) -> BaselineResult:
    teacher = Network.create(teacher_spec, seeds.derive_seed(cfg.seed, seeds.TEACHER), "teacher")
    metrics = _run_uda(UdaLearner(teacher, cfg, seeds.derive_seed(cfg.seed, seeds.DOMAIN_HEAD)), splits, cfg, True)

    student = Network.create(student_spec, seeds.derive_seed(cfg.seed, seeds.STUDENT), STUDENT_NAME)
    kd = StudentLearner(student, [teacher], cfg, [seeds.derive_seed(cfg.seed, seeds.REGRESSOR)])
    phase = _Phase(cfg, splits, [student], cfg.epochs)
    target_view = splits.target_trains[0].target_view()
    for epoch in range(cfg.epochs):
        sums = defaultdict(lambda: defaultdict(float))
        epoch_batches = batches(target_view, phase.plan.for_epoch(epoch))
        for step, tgt in enumerate(epoch_batches):
            beta = phase.beta(epoch, step, len(epoch_batches))
            kd.observe(0, teacher, tgt.features)
            for term, value in kd.step(0, teacher, None, tgt, cfg.weights, beta, epoch, step).items():
                sums[STUDENT_NAME][term] += value
        phase.finish_epoch(epoch, sums, len(epoch_batches))
    return BaselineResult(student, metrics + phase.metrics, [t.domain_id for t in splits.target_holdouts],
                          UDA_THEN_KD, teacher)


def _kd_then_uda(teacher_spec, student_spec, splits, cfg) -> BaselineResult:
    teacher = Network.create(teacher_spec, seeds.derive_seed(cfg.seed, seeds.TEACHER), "teacher")
    student = Network.create(student_spec, seeds.derive_seed(cfg.seed, seeds.STUDENT), STUDENT_NAME)
    supervised = UdaLearner(teacher, cfg, seeds.derive_seed(cfg.seed, seeds.DOMAIN_HEAD))
    kd = StudentLearner(student, [teacher], cfg, [seeds.derive_seed(cfg.seed, seeds.REGRESSOR)])
    phase = _Phase(cfg, splits, [student, teacher])
    source_view = splits.source_train.source_view()
    for epoch in range(cfg.epochs):
        sums = defaultdict(lambda: defaultdict(float))
        epoch_batches = batches(source_view, phase.plan.for_epoch(epoch))
        for step, src in enumerate(epoch_batches):
            sums[teacher.name]["l_ce"] += supervised.step(src, None, cfg.weights, 1.0, epoch, step)
            kd.observe(0, teacher, src.features)
            beta = phase.beta(epoch, step, len(epoch_batches))
            for term, value in kd.step(0, teacher, src, None, cfg.weights, beta, epoch, step).items():
                sums[STUDENT_NAME][term] += value
        phase.finish_epoch(epoch, sums, len(epoch_batches))

    adapt = UdaLearner(student, cfg, seeds.derive_seed(cfg.seed, seeds.DOMAIN_HEAD, 1))
    metrics = phase.metrics + _run_uda(adapt, splits, cfg, True, cfg.epochs)
    return BaselineResult(student, metrics, [t.domain_id for t in splits.target_holdouts], KD_THEN_UDA, teacher)


def _single_network(spec, splits, cfg, ordering: str) -> BaselineResult:
    # Seeded like the teacher: uda_only is the teacher routine applied to another network.
    model = Network.create(spec, seeds.derive_seed(cfg.seed, seeds.TEACHER), STUDENT_NAME)
    learner = UdaLearner(model, cfg, seeds.derive_seed(cfg.seed, seeds.DOMAIN_HEAD))
    metrics = _run_uda(learner, splits, cfg, ordering == UDA_ONLY)
    return BaselineResult(model, metrics, [t.domain_id for t in splits.target_holdouts], ordering)


def train_baseline(ordering: str, teacher_spec: Optional[NetworkSpec], student_spec: NetworkSpec,
                   source: DomainDataset, target: DomainDataset, cfg: TrainConfig) -> BaselineResult:
    """
    Runs one sequential ordering. Two-phase orderings run cfg.epochs per phase
    and number the second phase's epochs after the first.

    Args:
        ordering: One of uda_then_kd, kd_then_uda, uda_only, source_only.
        teacher_spec: Teacher architecture; unused by the single-network orderings.
        student_spec: The compact network every ordering ends with.
        source: Labeled source domain.
        target: Target domain; its labels are used for evaluation only.
        cfg: Training configuration; teacher_optimizer drives adaptation and
            supervised steps, student_optimizer drives distillation.

    Returns:
        BaselineResult whose `student` is the final compact model.
    """
    if ordering not in BASELINE_ORDERINGS:
        raise TrainingConfigError(f"ordering must be one of {BASELINE_ORDERINGS}, got '{ordering}'")
    if ordering in (UDA_THEN_KD, KD_THEN_UDA) and teacher_spec is None:
        raise TrainingConfigError(f"{ordering} needs a teacher network")
    splits = split_domains(source, [target], cfg)
    logger.info("Baseline started", extra={"ordering": ordering, "epochs": cfg.epochs})

    if ordering == UDA_THEN_KD:
        return _uda_then_kd(teacher_spec, student_spec, splits, cfg)
    if ordering == KD_THEN_UDA:
        return _kd_then_uda(teacher_spec, student_spec, splits, cfg)
    return _single_network(student_spec, splits, cfg, ordering)
