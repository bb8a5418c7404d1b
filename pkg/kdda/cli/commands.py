# kdda/cli/commands.py
"""
Subcommand implementations. Each returns a process exit code; configuration
problems surface as InvalidConfigError and are mapped to exit codes by main.
"""
import itertools
import json
import re
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence, Union

import pandas as pd
from aws_lambda_powertools import Logger

from kdda.cli.config import ExperimentConfig, load_config, load_domains, parse_and_validate_config, read_config
from kdda.cli.errors import InvalidConfigError
from kdda.cli.overrides import parse_value, split_assignment
from kdda.losses.gradcases import LOSS_CASES
from kdda.nets import CheckpointError, Network, load_state, save_state
from kdda.settings import settings
from kdda.tensor_ad.gradcheck import DEFAULT_INSTANCES, DEFAULT_TOLERANCE, PRIMITIVE_CASES, run_gradcheck
from kdda.trainers import (
    MtdaResult,
    RunResult,
    evaluate,
    mean_target_accuracy,
    metric_rows,
    split_domains,
    summarize,
    train_baseline,
    train_mixed_target,
    train_mtda,
    train_per_target,
    train_stda,
    write_metric_rows,
    write_summary,
)

logger = Logger(service="kdda", child=True)

METRICS_FILE = "metrics.csv"
SUMMARY_FILE = "summary.json"
RESOLVED_FILE = "config.resolved.json"
EVAL_FILE = "eval.json"
SWEEP_FILE = "sweep.csv"
CHECKPOINT_SUFFIX = ".ckpt"
SWEEP_COLUMNS = ("group", "model", "domain", "metric", "mean", "std", "n")
SEED_KEYS = ("seed", "train.seed")


def output_dir(config: ExperimentConfig, out: Optional[Union[str, Path]]) -> Path:
    """--out wins, then the config's output_dir, then <KDDA_OUTPUT_DIR>/<run_name>."""
    if out is not None:
        return Path(out)
    if config.output_dir:
        return Path(config.output_dir)
    return Path(settings.output_dir) / config.run_name


def _networks(result: RunResult) -> list[Network]:
    networks = [result.student]
    if isinstance(result, MtdaResult):
        networks.extend(result.teachers)
    elif getattr(result, "teacher", None) is not None:
        networks.append(result.teacher)
    return networks


def _save_networks(result: RunResult, directory: Path) -> None:
    for network in _networks(result):
        save_state(network.state, network.spec, directory / f"{network.name}{CHECKPOINT_SUFFIX}")


def run_experiment(config: ExperimentConfig, out_dir: Path) -> dict:
    """
    Trains the configured procedure and writes metrics, summary, checkpoints
    and the resolved config into `out_dir`.

    Returns:
        The summary dict written to summary.json.
    """
    source, targets = load_domains(config)
    teacher_spec, student_spec = config.build_specs(source)
    cfg = config.train
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / RESOLVED_FILE).write_text(json.dumps(config.resolved, indent=2, sort_keys=True) + "\n")
    logger.info("Training started", extra={
        "run": config.run_name, "procedure": config.procedure, "targets": [t.domain_id for t in targets],
        "teacher_params": teacher_spec.param_count(), "student_params": student_spec.param_count(),
    })
    extra = {"procedure": config.procedure, "seed": cfg.seed}

    if config.procedure == "per_target":
        results = train_per_target(teacher_spec, student_spec, source, targets, cfg)
        rows, per_target, final = [], {}, {}
        for target, result in zip(targets, results):
            label = f"{config.run_name}/{target.domain_id}"
            rows.extend(metric_rows(label, result.metrics))
            _save_networks(result, out_dir / target.domain_id)
            per_target[target.domain_id] = summarize(result, label)
            for model, accs in per_target[target.domain_id]["final_accuracy"].items():
                final[f"{target.domain_id}/{model}"] = accs
        write_metric_rows(rows, out_dir / METRICS_FILE)
        evaluated = all(r.metrics for r in results)
        summary = {
            "run": config.run_name,
            "final_accuracy": final,
            "per_target": per_target,
            "target_domains": [t.domain_id for t in targets],
            "student_target_accuracy": mean_target_accuracy(results) if evaluated else None,
            **extra,
        }
    else:
        if config.procedure == "stda":
            result = train_stda(teacher_spec, student_spec, source, targets[0], cfg)
        elif config.procedure == "mtda":
            result = train_mtda([teacher_spec] * len(targets), student_spec, source, targets, cfg)
        elif config.procedure == "mixed_target":
            result = train_mixed_target(teacher_spec, student_spec, source, targets, cfg)
        else:
            result = train_baseline(config.baseline, teacher_spec, student_spec, source, targets[0], cfg)
            extra["baseline"] = config.baseline
        write_metric_rows(metric_rows(config.run_name, result.metrics), out_dir / METRICS_FILE)
        _save_networks(result, out_dir)
        summary = summarize(result, config.run_name, **extra)

    write_summary(summary, out_dir / SUMMARY_FILE)
    logger.info("Training finished", extra={
        "run": config.run_name, "out": str(out_dir),
        "student_target_accuracy": summary["student_target_accuracy"],
    })
    return summary


def cmd_train(config_path: Union[str, Path], overrides: Sequence[str] = (), out: Optional[Union[str, Path]] = None,
              seed: Optional[int] = None) -> int:
    config = load_config(config_path, overrides, seed)
    summary = run_experiment(config, output_dir(config, out))
    print(json.dumps({"run": summary["run"], "student_target_accuracy": summary["student_target_accuracy"]}))
    return 0


def cmd_gradcheck(seed: int = 0, instances: int = DEFAULT_INSTANCES, tolerance: float = DEFAULT_TOLERANCE,
                  cases: Optional[Sequence] = None) -> int:
    """Prints the worst relative error per case; exit 1 when any case fails."""
    cases = [*PRIMITIVE_CASES, *LOSS_CASES] if cases is None else cases
    reports = run_gradcheck(cases, seed, instances, tolerance)
    width = max(len(r.name) for r in reports)
    for report in reports:
        status = "ok" if report.passed else "FAIL"
        print(f"{report.name:<{width}}  worst={report.worst_error:.3e}  n={report.instances}  {status}")
        for error in report.errors[:1]:
            print(f"{'':<{width}}  error: {error}")
    failed = [r.name for r in reports if not r.passed]
    if failed:
        logger.error("Gradient check failed", extra={"cases": failed, "tolerance": tolerance})
        print(f"{len(failed)} of {len(reports)} cases failed: {', '.join(failed)}")
        return 1
    print(f"all {len(reports)} cases passed (tolerance {tolerance:g})")
    return 0


def _split_values(text: str) -> list[str]:
    """Splits on commas outside brackets so list values such as [1,2] stay whole."""
    values, depth, current = [], 0, []
    for ch in text:
        if ch in "[{":
            depth += 1
        elif ch in "]}":
            depth -= 1
        if ch == "," and depth == 0:
            values.append("".join(current).strip())
            current = []
        else:
            current.append(ch)
    values.append("".join(current).strip())
    return [v for v in values if v]


def parse_axes(axes: Sequence[str]) -> list[tuple[str, list[str]]]:
    if not axes:
        raise InvalidConfigError("sweep needs at least one --axis KEY=V1,V2,...")
    parsed = []
    for item in axes:
        key, text = split_assignment(item)
        values = _split_values(text)
        if not values:
            raise InvalidConfigError(f"axis '{key}' has an empty value list")
        parsed.append((key, values))
    keys = [k for k, _ in parsed]
    if len(set(keys)) != len(keys):
        raise InvalidConfigError(f"duplicate sweep axis in {keys}")
    return parsed


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.=-]+", "_", text).strip("_")


def _run_sweep_point(job: tuple) -> dict:
    config_path, overrides, run_dir = job
    config = load_config(config_path, overrides)
    return run_experiment(config, Path(run_dir))


def cmd_sweep(config_path: Union[str, Path], axes: Sequence[str], out: Optional[Union[str, Path]] = None,
              overrides: Sequence[str] = (), seed: Optional[int] = None) -> int:
    """
    Runs the cross-product of the axes, one run directory per point, then
    writes mean and population std of every final metric over the seed axis.
    """
    axis_values = parse_axes(axes)
    base = [*overrides, *([f"train.seed={seed}"] if seed is not None else [])]
    base_config = load_config(config_path, base)
    root = output_dir(base_config, out)

    jobs, groups = [], []
    for index, combo in enumerate(itertools.product(*[[(key, v) for v in values] for key, values in axis_values])):
        assignments = [f"{key}={value}" for key, value in combo]
        # Every point is validated before any of them trains.
        load_config(config_path, [*base, *assignments])
        run_dir = root / "__".join([f"{index:03d}", *(_slug(a) for a in assignments)])
        jobs.append((str(config_path), [*base, *assignments], str(run_dir)))
        group = [f"{key}={parse_value(value)}" for key, value in combo if key not in SEED_KEYS]
        groups.append(";".join(group) or "all")

    workers = min(settings.da_threads, len(jobs))
    logger.info("Sweep started", extra={"points": len(jobs), "workers": workers, "out": str(root)})
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(_run_sweep_point, jobs))
    else:
        summaries = [_run_sweep_point(job) for job in jobs]

    table = aggregate_sweep(groups, summaries)
    root.mkdir(parents=True, exist_ok=True)
    table.to_csv(root / SWEEP_FILE, index=False, lineterminator="\n")
    print(table.to_string(index=False))
    return 0


def aggregate_sweep(groups: Sequence[str], summaries: Sequence[dict]) -> pd.DataFrame:
    records = []
    for group, summary in zip(groups, summaries):
        for model, accs in summary["final_accuracy"].items():
            for domain, value in accs.items():
                records.append({"group": group, "model": model, "domain": domain,
                                "metric": "accuracy", "value": value})
        if summary.get("student_target_accuracy") is not None:
            records.append({"group": group, "model": "student", "domain": "targets",
                            "metric": "mean_target_accuracy", "value": summary["student_target_accuracy"]})
    if not records:
        return pd.DataFrame(columns=list(SWEEP_COLUMNS))
    frame = pd.DataFrame.from_records(records)
    table = (frame.groupby(["group", "model", "domain", "metric"], sort=False)["value"]
             .agg(mean="mean", std=lambda v: v.std(ddof=0), n="count")
             .reset_index())
    return table[list(SWEEP_COLUMNS)]


def cmd_eval(out: Union[str, Path], config_path: Optional[Union[str, Path]] = None) -> int:
    """
    Scores every checkpoint under `out` on the held-out split of each labeled
    domain of the run's resolved config.
    """
    out = Path(out)
    resolved_path = Path(config_path) if config_path is not None else out / RESOLVED_FILE
    config = parse_and_validate_config(read_config(resolved_path), resolved_path.resolve().parent)
    checkpoints = sorted(out.rglob(f"*{CHECKPOINT_SUFFIX}"))
    if not checkpoints:
        raise InvalidConfigError(f"no checkpoints found under {out}")

    source, targets = load_domains(config)
    holdouts = split_domains(source, targets, config.train).holdouts
    report: dict[str, dict[str, float]] = {}
    for path in checkpoints:
        name = path.relative_to(out).with_suffix("").as_posix()
        try:
            spec, state = load_state(path)
        except CheckpointError as e:
            raise InvalidConfigError(str(e)) from e
        report[name] = {h.domain_id: evaluate(state, spec, h) for h in holdouts if h.has_labels}
        logger.info("Checkpoint evaluated", extra={"model": name, "accuracy": report[name]})

    (out / EVAL_FILE).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0
