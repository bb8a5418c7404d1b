# kdda/trainers/models.py
"""
Plain-dataclass models for training configuration, metrics and results.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from kdda.losses import DISTILL_MODES, MARGIN_COUNT, MARGIN_EMA, KernelConfig, LossWeights
from kdda.nets import Network
from kdda.schedule import PER_EPOCH, BetaSchedule, ScheduleError

UDA_MMD = "mmd"
UDA_REVGRAD = "revgrad"
UDA_METHODS = (UDA_MMD, UDA_REVGRAD)

UDA_THEN_KD = "uda_then_kd"
KD_THEN_UDA = "kd_then_uda"
UDA_ONLY = "uda_only"
SOURCE_ONLY = "source_only"
BASELINE_ORDERINGS = (UDA_THEN_KD, KD_THEN_UDA, UDA_ONLY, SOURCE_ONLY)


class TrainingConfigError(ValueError):
    """A training configuration violates its invariants."""
    pass


class NonFiniteLossError(RuntimeError):
    """A loss term became NaN or Inf; names the term and where it happened."""
    def __init__(self, term: str, epoch: int, step: int, model: str = ""):
        self.term, self.epoch, self.step, self.model = term, epoch, step, model
        where = f" for {model}" if model else ""
        super().__init__(f"non-finite {term}{where} at epoch {epoch}, step {step}")


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float = 0.01
    weight_decay: float = 0.0005
    momentum: float = 0.9

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise TrainingConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise TrainingConfigError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if not 0.0 <= self.momentum < 1.0:
            raise TrainingConfigError(f"momentum must lie in [0, 1), got {self.momentum}")


@dataclass(frozen=True)
class TrainConfig:
    """
    Every knob of a training run. `teacher_optimizer` drives the domain
    adaptation steps, `student_optimizer` the distillation steps.
    """
    epochs: int = 100
    batch_size: int = 32
    weights: LossWeights = field(default_factory=LossWeights)
    beta_start: float = 0.1
    beta_end: float = 0.5
    beta_update: str = PER_EPOCH
    fixed_beta: Optional[float] = None
    uda_method: str = UDA_MMD
    kd_mode: str = "logits"
    kernel: KernelConfig = field(default_factory=KernelConfig)
    teacher_optimizer: SgdConfig = field(default_factory=SgdConfig)
    student_optimizer: SgdConfig = field(default_factory=SgdConfig)
    margin_mode: str = MARGIN_COUNT
    margin_momentum: float = 0.9
    domain_hidden: tuple[int, ...] = (64, 64)
    seed: int = 0
    eval_every: int = 1
    holdout_fraction: float = 0.2
    # Optional epoch -> gamma override of weights.gamma.
    gamma_schedule: Optional[Callable[[int], float]] = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.epochs < 0:
            raise TrainingConfigError(f"epochs must be non-negative, got {self.epochs}")
        if self.batch_size < 1:
            raise TrainingConfigError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.uda_method not in UDA_METHODS:
            raise TrainingConfigError(f"uda_method must be one of {UDA_METHODS}, got '{self.uda_method}'")
        if self.kd_mode not in DISTILL_MODES:
            raise TrainingConfigError(f"kd_mode must be one of {DISTILL_MODES}, got '{self.kd_mode}'")
        if self.margin_mode not in (MARGIN_COUNT, MARGIN_EMA):
            raise TrainingConfigError(f"margin_mode must be '{MARGIN_COUNT}' or '{MARGIN_EMA}', got '{self.margin_mode}'")
        if self.seed < 0:
            raise TrainingConfigError(f"seed must be non-negative, got {self.seed}")
        if self.eval_every < 1:
            raise TrainingConfigError(f"eval_every must be at least 1, got {self.eval_every}")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise TrainingConfigError(f"holdout_fraction must lie in (0, 1), got {self.holdout_fraction}")
        if any(d < 1 for d in self.domain_hidden):
            raise TrainingConfigError(f"domain_hidden widths must be positive, got {list(self.domain_hidden)}")
        try:
            self.schedule()
        except ScheduleError as e:
            raise TrainingConfigError(str(e)) from e

    def schedule(self) -> BetaSchedule:
        # A zero-epoch run never queries beta; keep the schedule constructible.
        return BetaSchedule(self.beta_start, self.beta_end, max(self.epochs, 1),
                            self.beta_update, self.fixed_beta)

    def gamma_at(self, epoch: int) -> float:
        return float(self.gamma_schedule(epoch)) if self.gamma_schedule else self.weights.gamma


@dataclass
class MetricRecord:
    """Accuracy of one model on one domain's held-out split after an epoch."""
    epoch: int
    model: str
    domain: str
    accuracy: float
    losses: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise TrainingConfigError(f"accuracy {self.accuracy} outside [0, 1]")


def final_accuracies(metrics: list[MetricRecord]) -> dict[str, dict[str, float]]:
    """model -> domain -> accuracy at the last evaluated epoch of each model."""
    last: dict[str, int] = {}
    for m in metrics:
        last[m.model] = max(last.get(m.model, m.epoch), m.epoch)
    out: dict[str, dict[str, float]] = {}
    for m in metrics:
        if m.epoch == last[m.model]:
            out.setdefault(m.model, {})[m.domain] = m.accuracy
    return out


@dataclass
class RunResult:
    student: Network
    metrics: list[MetricRecord]
    target_domains: list[str]

    def final_target_accuracy(self, model: str = "student") -> float:
        """Mean accuracy of `model` over the target domains at the last epoch."""
        accs = final_accuracies(self.metrics).get(model, {})
        values = [accs[d] for d in self.target_domains if d in accs]
        return float(np.mean(values)) if values else float("nan")


@dataclass
class StdaResult(RunResult):
    teacher: Optional[Network] = None


@dataclass
class MtdaResult(RunResult):
    teachers: list[Network] = field(default_factory=list)


@dataclass
class BaselineResult(RunResult):
    """`student` holds the final compact model of the ordering."""
    ordering: str = SOURCE_ONLY
    teacher: Optional[Network] = None
