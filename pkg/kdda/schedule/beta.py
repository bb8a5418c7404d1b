# kdda/schedule/beta.py
"""
Exponential growth of the distillation weight beta from `b` to `f` over
`epochs`: beta_t = b * exp(g * t) with g = ln(f / b) / epochs.
"""
import math
from dataclasses import dataclass
from typing import Iterator, Optional

PER_EPOCH = "per-epoch"
PER_BATCH = "per-batch"
UPDATE_MODES = (PER_EPOCH, PER_BATCH)


class ScheduleError(ValueError):
    """Schedule parameters or query point are out of range."""
    pass


def growth_rate(b: float, f: float, epochs: int) -> float:
    if not b > 0:
        raise ScheduleError(f"beta start must be positive, got {b}")
    if f < b:
        raise ScheduleError(f"beta end {f} is below beta start {b}")
    if epochs < 1:
        raise ScheduleError(f"epochs must be at least 1, got {epochs}")
    return math.log(f / b) / epochs


@dataclass(frozen=True)
class BetaSchedule:
    b: float
    f: float
    epochs: int
    update: str = PER_EPOCH
    # Bypasses the schedule entirely (ablations, beta=0 teacher trajectory).
    fixed_beta: Optional[float] = None

    def __post_init__(self):
        if self.fixed_beta is not None:
            if not 0.0 <= self.fixed_beta <= 1.0:
                raise ScheduleError(f"fixed beta must lie in [0, 1], got {self.fixed_beta}")
            if self.epochs < 0:
                raise ScheduleError(f"epochs must be non-negative, got {self.epochs}")
        else:
            if self.f > 1.0:
                raise ScheduleError(f"beta end must be at most 1, got {self.f}")
            growth_rate(self.b, self.f, self.epochs)
        if self.update not in UPDATE_MODES:
            raise ScheduleError(f"beta update must be one of {UPDATE_MODES}, got '{self.update}'")

    @property
    def g(self) -> float:
        return growth_rate(self.b, self.f, self.epochs)

    def beta_at(self, t: float) -> float:
        if self.fixed_beta is not None:
            return float(self.fixed_beta)
        if not 0.0 <= t <= self.epochs:
            raise ScheduleError(f"t={t} is outside [0, {self.epochs}]")
        if t == 0:
            return float(self.b)
        return min(max(self.b * math.exp(self.g * t), self.b), self.f)

    def beta_for_step(self, epoch: int, step: int, steps: int) -> float:
        """
        Beta used for batch `step` of `steps` in 0-based `epoch`. Per-epoch mode
        holds beta_epoch for the whole epoch; per-batch mode advances t fractionally.
        """
        if self.update == PER_BATCH and steps > 0:
            return self.beta_at(epoch + step / steps)
        return self.beta_at(epoch)

    def sequence(self) -> Iterator[float]:
        """beta_0 .. beta_epochs."""
        for t in range(self.epochs + 1):
            yield self.beta_at(t)


def beta_at(schedule: BetaSchedule, t: float) -> float:
    return schedule.beta_at(t)
