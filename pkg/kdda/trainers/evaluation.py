# kdda/trainers/evaluation.py
from typing import Sequence

import numpy as np

from kdda.data import DomainDataset
from kdda.nets import Network, NetworkSpec, NetworkState
from kdda.trainers.models import MetricRecord


def evaluate(state: NetworkState, spec: NetworkSpec, dataset: DomainDataset) -> float:
    """Fraction of rows whose argmax logit equals the evaluation label."""
    view = dataset.evaluation_view()
    predictions = Network(spec, state).predict(view.features)
    return float(np.mean(predictions == view.labels))


def evaluate_models(epoch: int, models: Sequence[Network], holdouts: Sequence[DomainDataset],
                    losses: dict[str, dict[str, float]]) -> list[MetricRecord]:
    """
    One record per (model, domain). Domains without labels are skipped; a
    target stripped of labels still trains, it just cannot be scored.
    """
    records = []
    for model in models:
        for holdout in holdouts:
            if not holdout.has_labels:
                continue
            records.append(MetricRecord(
                epoch, model.name, holdout.domain_id,
                evaluate(model.state, model.spec, holdout),
                dict(losses.get(model.name, {})),
            ))
    return records
