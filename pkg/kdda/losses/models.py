# kdda/losses/models.py
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from kdda.tensor_ad.ops import SOFTMAX_CONVENTIONS, STANDARD_DIVIDE

KL_TEACHER_STUDENT = "teacher_student"
KL_STUDENT_TEACHER = "student_teacher"
KL_DIRECTIONS = (KL_TEACHER_STUDENT, KL_STUDENT_TEACHER)

MARGIN_COUNT = "count"
MARGIN_EMA = "ema"


class LossInputError(ValueError):
    """Loss inputs are malformed (labels out of range, empty batch, bad weights)."""
    pass


@dataclass(frozen=True)
class KernelConfig:
    """
    Gaussian kernel bandwidths for MMD. `fixed` uses `bandwidths` as sigma^2
    values; `median` scales the pooled median squared distance by `multipliers`.
    """
    strategy: str = "median"
    bandwidths: tuple[float, ...] = (1.0,)
    multipliers: tuple[float, ...] = (0.5, 1.0, 2.0)

    def __post_init__(self):
        if self.strategy not in ("fixed", "median"):
            raise LossInputError(f"kernel strategy must be 'fixed' or 'median', got '{self.strategy}'")
        values = self.bandwidths if self.strategy == "fixed" else self.multipliers
        if not values:
            raise LossInputError("kernel config needs at least one bandwidth")
        if any(not v > 0 for v in values):
            raise LossInputError(f"kernel bandwidths must be positive, got {list(values)}")


@dataclass
class MarginState:
    """
    Running per-channel mean of the negative teacher responses.
    Channels that have not produced a negative value yet keep margin 0.
    """
    margins: np.ndarray
    negative_counts: np.ndarray
    mode: str = MARGIN_COUNT
    momentum: float = 0.9

    @classmethod
    def empty(cls, channels: int, mode: str = MARGIN_COUNT, momentum: float = 0.9) -> "MarginState":
        if mode not in (MARGIN_COUNT, MARGIN_EMA):
            raise LossInputError(f"margin mode must be '{MARGIN_COUNT}' or '{MARGIN_EMA}', got '{mode}'")
        if not 0.0 <= momentum < 1.0:
            raise LossInputError(f"margin momentum must be in [0, 1), got {momentum}")
        return cls(np.zeros(channels), np.zeros(channels, dtype=np.int64), mode, momentum)

    @property
    def channels(self) -> int:
        return int(self.margins.shape[0])


@dataclass(frozen=True)
class LossWeights:
    gamma: float = 0.5
    alpha_dc: float = 0.5
    alpha_ce: float = 0.5
    tau: float = 20.0
    beta: float = 0.1
    grl_lambda: float = 1.0
    # Multiplies the per-element mean of the feature distillation loss.
    feature_weight: float = 1.0
    softmax_convention: str = STANDARD_DIVIDE
    kl_direction: str = KL_TEACHER_STUDENT

    def __post_init__(self):
        for name in ("gamma", "alpha_dc", "alpha_ce", "grl_lambda", "feature_weight"):
            if getattr(self, name) < 0:
                raise LossInputError(f"{name} must be non-negative, got {getattr(self, name)}")
        if not self.tau > 0:
            raise LossInputError(f"tau must be positive, got {self.tau}")
        if not 0.0 <= self.beta <= 1.0:
            raise LossInputError(f"beta must lie in [0, 1], got {self.beta}")
        if self.softmax_convention not in SOFTMAX_CONVENTIONS:
            raise LossInputError(f"unknown softmax convention '{self.softmax_convention}'")
        if self.kl_direction not in KL_DIRECTIONS:
            raise LossInputError(f"unknown KL direction '{self.kl_direction}'")


@dataclass
class ObjectiveParts:
    """The three loss terms one teacher contributes at a training step."""
    l_tda: object
    l_tkd: object
    l_skd: object
    index: Optional[int] = None
    extras: dict = field(default_factory=dict)
