# kdda/trainers/reporting.py
import csv
import json
from pathlib import Path
from typing import Sequence, Union

from kdda.trainers.models import MetricRecord, RunResult, final_accuracies

METRIC_COLUMNS = ("run", "epoch", "model", "domain", "metric", "value")
# Losses belong to a model, not to an evaluation domain.
LOSS_DOMAIN = "train"


def metric_rows(run: str, records: Sequence[MetricRecord]) -> list[dict]:
    rows = []
    logged_losses = set()
    for r in records:
        rows.append({"run": run, "epoch": r.epoch, "model": r.model, "domain": r.domain,
                     "metric": "accuracy", "value": repr(float(r.accuracy))})
        if (r.epoch, r.model) in logged_losses:
            continue
        logged_losses.add((r.epoch, r.model))
        for name in sorted(r.losses):
            rows.append({"run": run, "epoch": r.epoch, "model": r.model, "domain": LOSS_DOMAIN,
                         "metric": name, "value": repr(float(r.losses[name]))})
    return rows


def write_metrics_csv(records: Sequence[MetricRecord], path: Union[str, Path], run: str) -> Path:
    return write_metric_rows(metric_rows(run, records), path)


def write_metric_rows(rows: Sequence[dict], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=METRIC_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return path


def summarize(result: RunResult, run: str, **extra) -> dict:
    """Final per-model, per-domain accuracies plus the student's target average."""
    summary = {
        "run": run,
        "epochs_evaluated": len({m.epoch for m in result.metrics}),
        "final_accuracy": final_accuracies(result.metrics),
        "target_domains": list(result.target_domains),
        "student_target_accuracy": None,
    }
    if result.metrics:
        summary["student_target_accuracy"] = result.final_target_accuracy()
    summary.update(extra)
    return summary


def write_summary(summary: dict, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return path
