# kdda/data/batching.py
from typing import Iterator, Sequence, Union

import numpy as np

from kdda.data.models import Batch, BatchPlan, DatasetError, DomainDataset, FeatureView, LabeledView

View = Union[FeatureView, LabeledView]


def _as_view(data: Union[View, DomainDataset]) -> View:
    if isinstance(data, DomainDataset):
        # Unlabeled data stays unlabeled; labeled datasets are treated as source.
        return data.source_view() if data.has_labels else data.target_view()
    return data


def _take(view: View, indices: np.ndarray) -> Batch:
    return Batch(view.features[indices], None if view.labels is None else view.labels[indices])


def batches(data: Union[View, DomainDataset], plan: BatchPlan) -> list[Batch]:
    """One shuffled pass over `data`; the last batch holds the remainder."""
    view = _as_view(data)
    order = plan.permutation(len(view))
    return [_take(view, order[i:i + plan.batch_size]) for i in range(0, len(view), plan.batch_size)]


def _cycled_indices(n: int, total: int, plan: BatchPlan, stream: int) -> np.ndarray:
    cycles = -(-total // n)
    return np.concatenate([plan.permutation(n, stream, cycle) for cycle in range(cycles)])[:total]


def paired_batches(views: Sequence[Union[View, DomainDataset]], plan: BatchPlan) -> Iterator[tuple[Batch, ...]]:
    """
    Walks several streams in lockstep. The longest stream is consumed exactly
    once; shorter ones cycle, drawing a fresh permutation per cycle, and each
    yields as many rows per step as the longest.
    """
    views = [_as_view(v) for v in views]
    if not views:
        raise DatasetError("paired_batches: needs at least one stream")
    if any(len(v) == 0 for v in views):
        raise DatasetError("paired_batches: empty stream")

    longest = max(len(v) for v in views)
    lead = next(i for i, v in enumerate(views) if len(v) == longest)
    orders = []
    for stream, view in enumerate(views):
        if stream == lead:
            orders.append(plan.permutation(longest, stream))
        else:
            orders.append(_cycled_indices(len(view), longest, plan, stream))
    for start in range(0, longest, plan.batch_size):
        yield tuple(_take(v, order[start:start + plan.batch_size]) for v, order in zip(views, orders))


def steps_per_epoch(views: Sequence[Union[View, DomainDataset]], batch_size: int) -> int:
    longest = max(len(_as_view(v)) for v in views)
    return -(-longest // batch_size)
