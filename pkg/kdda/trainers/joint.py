# kdda/trainers/joint.py
"""
Progressive joint adaptation and distillation. Single-target training is the
one-teacher case of the multi-teacher loop.
"""
from collections import defaultdict
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from aws_lambda_powertools import Logger

from kdda.data import Batch, BatchPlan, DomainDataset, paired_batches, steps_per_epoch
from kdda.nets import Network, NetworkSpec
from kdda.trainers import seeds
from kdda.trainers.evaluation import evaluate_models
from kdda.trainers.learners import StudentLearner, UdaLearner
from kdda.trainers.models import MetricRecord, MtdaResult, StdaResult, TrainConfig, TrainingConfigError

logger = Logger(service="kdda", child=True)

STUDENT_NAME = "student"


def teacher_name(index: int, count: int) -> str:
    return "teacher" if count == 1 else f"teacher_{index}"


@dataclass
class DomainSplits:
    source_train: DomainDataset
    source_holdout: DomainDataset
    target_trains: list[DomainDataset]
    target_holdouts: list[DomainDataset]

    @property
    def holdouts(self) -> list[DomainDataset]:
        return [self.source_holdout, *self.target_holdouts]


def split_domains(source: DomainDataset, targets: Sequence[DomainDataset], cfg: TrainConfig) -> DomainSplits:
    """Seeded train/holdout split per domain; domain i uses split seed index i."""
    if not source.has_labels:
        raise TrainingConfigError(f"source domain '{source.domain_id}' has no labels")
    ids = [source.domain_id, *(t.domain_id for t in targets)]
    if len(set(ids)) != len(ids):
        raise TrainingConfigError(f"domain ids must be unique, got {ids}")
    dims = {source.dim, *(t.dim for t in targets)}
    if len(dims) != 1:
        raise TrainingConfigError(f"all domains need the same feature width, got {sorted(dims)}")

    source_train, source_holdout = source.split(cfg.holdout_fraction, seeds.derive_seed(cfg.seed, seeds.SPLIT, 0))
    target_trains, target_holdouts = [], []
    for i, target in enumerate(targets, start=1):
        train, holdout = target.split(cfg.holdout_fraction, seeds.derive_seed(cfg.seed, seeds.SPLIT, i))
        target_trains.append(train)
        target_holdouts.append(holdout)
    return DomainSplits(source_train, source_holdout, target_trains, target_holdouts)


def _check_specs(teacher_specs: Sequence[NetworkSpec], student_spec: NetworkSpec, source: DomainDataset) -> None:
    for spec in (*teacher_specs, student_spec):
        if spec.input_dim != source.dim:
            raise TrainingConfigError(f"network input width {spec.input_dim} does not match data width {source.dim}")
        if spec.class_count != student_spec.class_count:
            raise TrainingConfigError("teacher and student class counts differ")
    if source.class_count is not None and source.class_count > student_spec.class_count:
        raise TrainingConfigError(
            f"source has {source.class_count} classes, networks predict {student_spec.class_count}"
        )


def run_joint(teacher_specs: Sequence[NetworkSpec], student_spec: NetworkSpec, source_train: DomainDataset,
              target_trains: Sequence[DomainDataset], holdouts: Sequence[DomainDataset], cfg: TrainConfig,
              epoch_offset: int = 0, pool_targets: bool = False) -> tuple[Network, list[Network], list[MetricRecord]]:
    """
    Per paired batch and per teacher i: a domain adaptation step of teacher i
    on (1 - beta) L_TDA against (S, T_i), then a student step on
    beta (L_TKD + L_SKD) distilled from teacher i.

    With `pool_targets`, a single teacher sees the rows of every target batch
    of the step as one target batch, so it runs the same number of steps on
    the same target rows as the one-teacher-per-target loop.
    """
    groups = 1 if pool_targets else len(target_trains)
    if len(teacher_specs) != groups:
        raise TrainingConfigError(
            f"{len(teacher_specs)} teachers for {len(target_trains)} targets; need one teacher per target"
        )
    if not teacher_specs or not target_trains:
        raise TrainingConfigError("at least one target domain is required")
    _check_specs(teacher_specs, student_spec, source_train)

    n = len(teacher_specs)
    teachers = [
        Network.create(spec, seeds.derive_seed(cfg.seed, seeds.TEACHER, i), teacher_name(i, n))
        for i, spec in enumerate(teacher_specs)
    ]
    student = Network.create(student_spec, seeds.derive_seed(cfg.seed, seeds.STUDENT), STUDENT_NAME)
    uda = [UdaLearner(t, cfg, seeds.derive_seed(cfg.seed, seeds.DOMAIN_HEAD, i)) for i, t in enumerate(teachers)]
    kd = StudentLearner(student, teachers, cfg,
                        [seeds.derive_seed(cfg.seed, seeds.REGRESSOR, i) for i in range(n)])

    schedule = cfg.schedule()
    source_view = source_train.source_view()
    target_views = [t.target_view() for t in target_trains]
    streams = [source_view, *target_views]
    steps = steps_per_epoch(streams, cfg.batch_size)
    plan = BatchPlan(cfg.batch_size, seeds.derive_seed(cfg.seed, seeds.BATCHES))
    metrics: list[MetricRecord] = []

    for epoch in range(cfg.epochs):
        sums: dict[str, dict[str, float]] = defaultdict(lambda: defaultdict(float))
        weights = replace(cfg.weights, gamma=cfg.gamma_at(epoch))
        beta = schedule.beta_at(epoch)
        for step, (src, *tgts) in enumerate(paired_batches(streams, plan.for_epoch(epoch))):
            beta = schedule.beta_for_step(epoch, step, steps)
            weights = replace(weights, beta=beta)
            if pool_targets:
                tgts = [Batch.concat(tgts)]
            for i, (teacher, tgt) in enumerate(zip(teachers, tgts)):
                sums[teacher.name]["l_tda"] += uda[i].step(src, tgt, weights, 1.0 - beta, epoch, step)
                kd.observe(i, teacher, src.features, tgt.features)
                for term, value in kd.step(i, teacher, src, tgt, weights, beta, epoch, step).items():
                    sums[STUDENT_NAME][term] += value / n
            logger.debug("Step complete", extra={"epoch": epoch, "step": step, "beta": beta})

        losses = {model: {k: v / steps for k, v in terms.items()} for model, terms in sums.items()}
        losses.setdefault(STUDENT_NAME, {})["beta"] = beta
        if (epoch + 1) % cfg.eval_every == 0 or epoch + 1 == cfg.epochs:
            records = evaluate_models(epoch + epoch_offset, [student, *teachers], holdouts, losses)
            metrics.extend(records)
            logger.info("Epoch complete", extra={
                "epoch": epoch + epoch_offset, "beta": beta, "losses": losses,
                "accuracy": {f"{r.model}/{r.domain}": r.accuracy for r in records},
            })
    return student, teachers, metrics


def train_stda(teacher_spec: NetworkSpec, student_spec: NetworkSpec, source: DomainDataset,
               target: DomainDataset, cfg: TrainConfig) -> StdaResult:
    """
    Joint single-target training: the teacher adapts to `target` while the
    student distills it on both target and source batches.
    """
    splits = split_domains(source, [target], cfg)
    student, teachers, metrics = run_joint(
        [teacher_spec], student_spec, splits.source_train, splits.target_trains, splits.holdouts, cfg,
    )
    return StdaResult(student, metrics, [target.domain_id], teachers[0])


def train_mtda(teacher_specs: Sequence[NetworkSpec], student_spec: NetworkSpec, source: DomainDataset,
               targets: Sequence[DomainDataset], cfg: TrainConfig) -> MtdaResult:
    """One teacher per target, distilled round-robin into a single student."""
    if len(teacher_specs) != len(targets):
        raise TrainingConfigError(
            f"{len(teacher_specs)} teachers for {len(targets)} targets; need one teacher per target"
        )
    splits = split_domains(source, targets, cfg)
    student, teachers, metrics = run_joint(
        teacher_specs, student_spec, splits.source_train, splits.target_trains, splits.holdouts, cfg,
    )
    return MtdaResult(student, metrics, [t.domain_id for t in targets], teachers)


def train_mixed_target(teacher_spec: NetworkSpec, student_spec: NetworkSpec, source: DomainDataset,
                       targets: Sequence[DomainDataset], cfg: TrainConfig) -> StdaResult:
    """
    Single-target training with every target merged into one domain: one
    teacher adapts to the pooled target rows of each step. Still evaluated on
    each target's own holdout.
    """
    splits = split_domains(source, targets, cfg)
    student, teachers, metrics = run_joint(
        [teacher_spec], student_spec, splits.source_train, splits.target_trains, splits.holdouts, cfg,
        pool_targets=True,
    )
    return StdaResult(student, metrics, [t.domain_id for t in targets], teachers[0])


def train_per_target(teacher_spec: NetworkSpec, student_spec: NetworkSpec, source: DomainDataset,
                     targets: Sequence[DomainDataset], cfg: TrainConfig) -> list[StdaResult]:
    """One independent single-target student per target."""
    return [train_stda(teacher_spec, student_spec, source, target, cfg) for target in targets]


def mean_target_accuracy(results: Sequence[StdaResult]) -> float:
    return float(np.mean([r.final_target_accuracy() for r in results]))
