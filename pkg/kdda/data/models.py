# kdda/data/models.py
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class DatasetError(ValueError):
    """Malformed dataset, CSV input or batch plan."""
    pass


def _frozen(values: Optional[np.ndarray]) -> Optional[np.ndarray]:
    if values is not None:
        values.setflags(write=False)
    return values


@dataclass(frozen=True)
class FeatureView:
    """Training view of a target domain: features only."""
    features: np.ndarray
    labels: None = None

    def __len__(self) -> int:
        return int(self.features.shape[0])


@dataclass(frozen=True)
class LabeledView:
    features: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return int(self.features.shape[0])


@dataclass(frozen=True)
class DomainDataset:
    """
    Samples of one domain. Target labels, when present, are reachable only
    through `evaluation_view()`.
    """
    features: np.ndarray
    labels: Optional[np.ndarray]
    domain_id: str
    generator_params: dict = field(default_factory=dict)
    class_count: Optional[int] = None

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] < 1 or features.shape[1] < 1:
            raise DatasetError(f"{self.domain_id}: features must be a non-empty N x d matrix, got {features.shape}")
        if not np.all(np.isfinite(features)):
            raise DatasetError(f"{self.domain_id}: features contain NaN or Inf")
        labels = None
        if self.labels is not None:
            labels = np.array(self.labels)
            if labels.shape != (features.shape[0],):
                raise DatasetError(f"{self.domain_id}: {labels.shape} labels for {features.shape[0]} rows")
            if labels.size and not np.all(labels == np.round(labels)):
                raise DatasetError(f"{self.domain_id}: labels must be integers")
            labels = labels.astype(np.int64)
            if labels.min() < 0:
                raise DatasetError(f"{self.domain_id}: negative label {labels.min()}")
            if self.class_count is not None and labels.max() >= self.class_count:
                raise DatasetError(
                    f"{self.domain_id}: label {labels.max()} out of range for {self.class_count} classes"
                )
        object.__setattr__(self, "features", _frozen(features))
        object.__setattr__(self, "labels", _frozen(labels))

    def __len__(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    def source_view(self) -> LabeledView:
        if self.labels is None:
            raise DatasetError(f"{self.domain_id}: a source domain needs labels")
        return LabeledView(self.features, self.labels)

    def target_view(self) -> FeatureView:
        return FeatureView(self.features)

    def evaluation_view(self) -> LabeledView:
        if self.labels is None:
            raise DatasetError(f"{self.domain_id}: cannot evaluate on an unlabeled domain")
        return LabeledView(self.features, self.labels)

    def subset(self, indices: np.ndarray, domain_id: Optional[str] = None) -> "DomainDataset":
        return DomainDataset(
            self.features[indices],
            None if self.labels is None else self.labels[indices],
            domain_id or self.domain_id,
            dict(self.generator_params),
            self.class_count,
        )

    def split(self, holdout_fraction: float = 0.2, seed: int = 0) -> tuple["DomainDataset", "DomainDataset"]:
        """Seeded (train, holdout) partition; both parts keep at least one row."""
        if not 0.0 < holdout_fraction < 1.0:
            raise DatasetError(f"holdout fraction must lie in (0, 1), got {holdout_fraction}")
        if len(self) < 2:
            raise DatasetError(f"{self.domain_id}: need at least 2 rows to split, got {len(self)}")
        order = np.random.default_rng(seed).permutation(len(self))
        held = min(max(int(round(holdout_fraction * len(self))), 1), len(self) - 1)
        return self.subset(np.sort(order[held:])), self.subset(np.sort(order[:held]))

    @classmethod
    def concat(cls, datasets: Sequence["DomainDataset"], domain_id: str) -> "DomainDataset":
        if not datasets:
            raise DatasetError("concat: needs at least one dataset")
        dims = {d.dim for d in datasets}
        if len(dims) != 1:
            raise DatasetError(f"concat: feature dims differ {sorted(dims)}")
        labeled = [d.has_labels for d in datasets]
        labels = np.concatenate([d.labels for d in datasets]) if all(labeled) else None
        class_counts = [d.class_count for d in datasets if d.class_count is not None]
        return cls(
            np.concatenate([d.features for d in datasets]),
            labels,
            domain_id,
            {"concat": [d.domain_id for d in datasets]},
            max(class_counts) if class_counts else None,
        )


@dataclass(frozen=True)
class BatchPlan:
    batch_size: int
    seed: int = 0
    epoch: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise DatasetError(f"batch size must be at least 1, got {self.batch_size}")
        if self.epoch < 0:
            raise DatasetError(f"epoch must be non-negative, got {self.epoch}")
        if self.seed < 0:
            raise DatasetError(f"seed must be non-negative, got {self.seed}")

    def permutation(self, n: int, stream: int = 0, cycle: int = 0) -> np.ndarray:
        return np.random.default_rng([self.seed, self.epoch, stream, cycle]).permutation(n)

    def for_epoch(self, epoch: int) -> "BatchPlan":
        return BatchPlan(self.batch_size, self.seed, epoch)


@dataclass(frozen=True)
class Batch:
    features: np.ndarray
    labels: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return int(self.features.shape[0])

    @classmethod
    def concat(cls, parts: Sequence["Batch"]) -> "Batch":
        """Rows of every part in order; labels survive only if every part has them."""
        if not parts:
            raise DatasetError("concat: needs at least one batch")
        labels = [p.labels for p in parts]
        return cls(
            np.concatenate([p.features for p in parts]),
            None if any(y is None for y in labels) else np.concatenate(labels),
        )
