# kdda/data/csv_io.py
"""
CSV ingestion. Header: f0..f{d-1}, optional `label`, required `domain`.
"""
import csv
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from aws_lambda_powertools import Logger

from kdda.data.models import DatasetError, DomainDataset

logger = Logger(service="kdda", child=True)

_FEATURE_COLUMN = re.compile(r"^f(\d+)$")


@dataclass(frozen=True)
class CsvSchema:
    """Optional expectations checked while loading."""
    feature_dim: Optional[int] = None
    class_count: Optional[int] = None
    # Keep only rows of this domain; required when the file mixes domains.
    domain: Optional[str] = None
    require_labels: bool = False


def _feature_columns(header: list[str], path: Path) -> list[str]:
    indices = sorted(int(m.group(1)) for m in map(_FEATURE_COLUMN.match, header) if m)
    if not indices:
        raise DatasetError(f"{path}: no feature columns (expected f0, f1, ...)")
    if indices != list(range(len(indices))):
        raise DatasetError(f"{path}: feature columns must be f0..f{len(indices) - 1} without gaps")
    return [f"f{i}" for i in indices]


def load_csv(path: Union[str, Path], schema: Optional[CsvSchema] = None) -> DomainDataset:
    schema = schema or CsvSchema()
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"{path}: file not found")

    with path.open(newline="") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames
        if not header:
            raise DatasetError(f"{path}: empty file")
        if "domain" not in header:
            raise DatasetError(f"{path}: missing required column 'domain'")
        columns = _feature_columns(header, path)
        if schema.feature_dim is not None and len(columns) != schema.feature_dim:
            raise DatasetError(f"{path}: {len(columns)} feature columns, expected {schema.feature_dim}")
        has_label = "label" in header
        if schema.require_labels and not has_label:
            raise DatasetError(f"{path}: missing required column 'label'")

        rows, labels, domains = [], [], set()
        for row in reader:
            line = reader.line_num
            domain = (row.get("domain") or "").strip()
            if not domain:
                raise DatasetError(f"{path}:{line}: empty domain")
            domains.add(domain)
            if schema.domain is not None and domain != schema.domain:
                continue
            try:
                rows.append([float(row[c]) for c in columns])
            except (TypeError, ValueError):
                raise DatasetError(f"{path}:{line}: non-numeric feature value")
            if not np.all(np.isfinite(rows[-1])):
                raise DatasetError(f"{path}:{line}: non-finite feature value")
            if has_label:
                raw = (row.get("label") or "").strip()
                try:
                    label = int(raw)
                except ValueError:
                    raise DatasetError(f"{path}:{line}: label '{raw}' is not an integer")
                if label < 0 or (schema.class_count is not None and label >= schema.class_count):
                    raise DatasetError(f"{path}:{line}: label {label} out of range")
                labels.append(label)

    if not rows:
        raise DatasetError(f"{path}: no data rows" + (f" for domain '{schema.domain}'" if schema.domain else ""))
    if schema.domain is None and len(domains) > 1:
        raise DatasetError(f"{path}: file mixes domains {sorted(domains)}; select one")
    domain_id = schema.domain or next(iter(domains))

    logger.info("Loaded dataset", extra={"path": str(path), "domain": domain_id, "rows": len(rows)})
    return DomainDataset(
        np.array(rows),
        np.array(labels, dtype=np.int64) if has_label else None,
        domain_id,
        {"loader": "csv", "path": str(path)},
        schema.class_count,
    )


def save_csv(dataset: DomainDataset, path: Union[str, Path], include_labels: bool = True) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_labels = include_labels and dataset.has_labels
    fieldnames = [f"f{i}" for i in range(dataset.dim)] + (["label"] if write_labels else []) + ["domain"]
    with path.open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for i, values in enumerate(dataset.features):
            row = {f"f{j}": repr(float(v)) for j, v in enumerate(values)}
            if write_labels:
                row["label"] = int(dataset.labels[i])
            row["domain"] = dataset.domain_id
            writer.writerow(row)
    return path
