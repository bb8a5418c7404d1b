# kdda/cli/config.py
"""
JSON experiment configuration: parsing, validation and dataset construction.

Top-level keys:
    run_name, procedure, baseline, source, targets, teacher, student,
    classes, train, output_dir
"""
import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence, Union

from aws_lambda_powertools import Logger

from kdda.cli.errors import InvalidConfigError
from kdda.cli.overrides import apply_overrides
from kdda.cli.presets import PRESETS, apply_preset
from kdda.data import CsvSchema, DatasetError, DomainDataset, gen_blobs, gen_two_moons, load_csv
from kdda.losses import KernelConfig, LossInputError, LossWeights
from kdda.nets import NetworkSpec, SpecError, build_mlp_spec
from kdda.schedule import ScheduleError
from kdda.trainers import BASELINE_ORDERINGS, SgdConfig, TrainConfig, TrainingConfigError
from kdda.trainers import seeds

logger = Logger(service="kdda", child=True)

PROCEDURES = ("stda", "mtda", "mixed_target", "per_target", "baseline")
TOP_LEVEL_KEYS = ("run_name", "procedure", "baseline", "source", "targets", "teacher", "student",
                  "classes", "train", "output_dir")
TRAIN_KEYS = ("preset", "epochs", "batch_size", "gamma", "alpha", "alpha_dc", "alpha_ce", "tau",
              "softmax_convention", "kl_direction", "grl_lambda", "feature_weight", "beta_start", "beta_end",
              "beta_update", "fixed_beta", "uda_method", "kd_mode", "kernel", "teacher_optimizer",
              "student_optimizer", "margin_mode", "margin_momentum", "domain_hidden", "seed", "eval_every",
              "holdout_fraction")
GENERATOR_KEYS = {
    "two_moons": ("generator", "domain_id", "n", "noise_sigma", "rotation_deg", "translation",
                  "label_flip_frac", "seed"),
    "blobs": ("generator", "domain_id", "n", "centers", "sigma", "seed"),
    "csv": ("generator", "domain_id", "path", "domain"),
}
NETWORK_KEYS = ("hidden", "taps")
KERNEL_KEYS = ("strategy", "bandwidths", "multipliers")
OPTIMIZER_KEYS = ("learning_rate", "weight_decay", "momentum")


def _reject_unknown(section: str, values: dict, allowed: Sequence[str]) -> None:
    if not isinstance(values, dict):
        raise InvalidConfigError(f"'{section}' must be an object")
    unknown = sorted(set(values) - set(allowed))
    if unknown:
        raise InvalidConfigError(f"unknown key '{section + '.' if section else ''}{unknown[0]}'")


def _int(section: str, key: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvalidConfigError(f"'{section}.{key}' must be an integer, got {value!r}")
    return value


def _float(section: str, key: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidConfigError(f"'{section}.{key}' must be a number, got {value!r}")
    return float(value)


def _int_list(section: str, key: str, value: Any) -> list[int]:
    if not isinstance(value, list):
        raise InvalidConfigError(f"'{section}.{key}' must be a list of integers, got {value!r}")
    return [_int(section, key, v) for v in value]


@dataclass
class DomainSource:
    """Where a domain's samples come from: a generator or a CSV file."""
    generator: str
    domain_id: str
    params: dict = field(default_factory=dict)

    def load(self) -> DomainDataset:
        try:
            if self.generator == "two_moons":
                return gen_two_moons(domain_id=self.domain_id, **self.params)
            if self.generator == "blobs":
                return gen_blobs(domain_id=self.domain_id, **self.params)
            return load_csv(self.params["path"], CsvSchema(domain=self.params.get("domain")))
        except TypeError as e:
            raise InvalidConfigError(f"domain '{self.domain_id}': {e}") from e


@dataclass
class NetworkConfig:
    hidden: list[int]
    taps: Optional[list[int]] = None

    def build(self, in_dim: int, class_count: int) -> NetworkSpec:
        try:
            return build_mlp_spec(in_dim, self.hidden, class_count, self.taps)
        except SpecError as e:
            raise InvalidConfigError(str(e)) from e


@dataclass
class ExperimentConfig:
    run_name: str
    procedure: str
    source: DomainSource
    targets: list[DomainSource]
    teacher: NetworkConfig
    student: NetworkConfig
    train: TrainConfig
    baseline: Optional[str] = None
    classes: Optional[int] = None
    output_dir: Optional[str] = None
    # Fully resolved raw dict; reloading it reproduces the run.
    resolved: dict = field(default_factory=dict)
    base_dir: Optional[Path] = None

    def load_domains(self) -> tuple[DomainDataset, list[DomainDataset]]:
        source = self.source.load()
        targets = [t.load() for t in self.targets]
        return source, targets

    def class_count(self, source: DomainDataset) -> int:
        if self.classes is not None:
            return self.classes
        if source.class_count is not None:
            return source.class_count
        return int(source.labels.max()) + 1

    def build_specs(self, source: DomainDataset) -> tuple[NetworkSpec, NetworkSpec]:
        classes = self.class_count(source)
        return self.teacher.build(source.dim, classes), self.student.build(source.dim, classes)


def _parse_domain(section: str, raw: Any, default_id: str, default_seed: int,
                  base_dir: Optional[Path] = None) -> tuple[DomainSource, dict]:
    if not isinstance(raw, dict):
        raise InvalidConfigError(f"'{section}' must be an object")
    generator = raw.get("generator", "two_moons")
    if generator not in GENERATOR_KEYS:
        raise InvalidConfigError(f"'{section}.generator' must be one of {sorted(GENERATOR_KEYS)}, got '{generator}'")
    _reject_unknown(section, raw, GENERATOR_KEYS[generator])
    resolved = dict(raw)
    resolved["generator"] = generator
    resolved.setdefault("domain_id", default_id)
    if not isinstance(resolved["domain_id"], str) or not resolved["domain_id"]:
        raise InvalidConfigError(f"'{section}.domain_id' must be a non-empty string")

    params = {k: v for k, v in resolved.items() if k not in ("generator", "domain_id")}
    if generator == "csv":
        if not isinstance(params.get("path"), str):
            raise InvalidConfigError(f"'{section}.path' is required for csv domains")
        path = Path(params["path"])
        if base_dir is not None and not path.is_absolute():
            path = (base_dir / path).resolve()
        params["path"] = resolved["path"] = str(path)
    else:
        resolved.setdefault("seed", default_seed)
        params["seed"] = _int(section, "seed", resolved["seed"])
        if "n" not in params:
            raise InvalidConfigError(f"'{section}.n' is required")
        params["n"] = _int(section, "n", params["n"])
    return DomainSource(generator, resolved["domain_id"], params), resolved


def _parse_network(section: str, raw: Any) -> NetworkConfig:
    _reject_unknown(section, raw, NETWORK_KEYS)
    if "hidden" not in raw:
        raise InvalidConfigError(f"'{section}.hidden' is required")
    taps = raw.get("taps")
    return NetworkConfig(_int_list(section, "hidden", raw["hidden"]),
                         None if taps is None else _int_list(section, "taps", taps))


def _parse_optimizer(section: str, raw: Any) -> SgdConfig:
    _reject_unknown(section, raw, OPTIMIZER_KEYS)
    return SgdConfig(**{k: _float(section, k, v) for k, v in raw.items()})


def _parse_train(raw: dict) -> tuple[TrainConfig, dict]:
    _reject_unknown("train", raw, TRAIN_KEYS)
    if raw.get("preset") is not None and raw["preset"] not in PRESETS:
        raise InvalidConfigError(f"'train.preset' must be one of {sorted(PRESETS)}, got '{raw['preset']}'")
    merged = apply_preset(raw)
    _reject_unknown("train", merged, TRAIN_KEYS)

    alpha = merged.get("alpha")
    weight_kwargs = {}
    for key in ("gamma", "alpha_dc", "alpha_ce", "tau", "grl_lambda", "feature_weight"):
        if key in merged:
            weight_kwargs[key] = _float("train", key, merged[key])
        elif key in ("alpha_dc", "alpha_ce") and alpha is not None:
            weight_kwargs[key] = _float("train", "alpha", alpha)
    for key in ("softmax_convention", "kl_direction"):
        if key in merged:
            weight_kwargs[key] = merged[key]

    kwargs: dict[str, Any] = {"weights": LossWeights(**weight_kwargs)}
    for key in ("epochs", "batch_size", "seed", "eval_every"):
        if key in merged:
            kwargs[key] = _int("train", key, merged[key])
    for key in ("beta_start", "beta_end", "margin_momentum", "holdout_fraction"):
        if key in merged:
            kwargs[key] = _float("train", key, merged[key])
    if merged.get("fixed_beta") is not None:
        kwargs["fixed_beta"] = _float("train", "fixed_beta", merged["fixed_beta"])
    for key in ("beta_update", "uda_method", "kd_mode", "margin_mode"):
        if key in merged:
            kwargs[key] = merged[key]
    if "domain_hidden" in merged:
        kwargs["domain_hidden"] = tuple(_int_list("train", "domain_hidden", merged["domain_hidden"]))
    if "kernel" in merged:
        kernel = merged["kernel"]
        _reject_unknown("train.kernel", kernel, KERNEL_KEYS)
        kwargs["kernel"] = KernelConfig(**{
            k: (tuple(_float("train.kernel", k, x) for x in v) if k != "strategy" else v)
            for k, v in kernel.items()
        })
    for key in ("teacher_optimizer", "student_optimizer"):
        if key in merged:
            kwargs[key] = _parse_optimizer(f"train.{key}", merged[key])
    return TrainConfig(**kwargs), merged


def parse_and_validate_config(raw: dict, base_dir: Optional[Path] = None) -> ExperimentConfig:
    """
    Validates a raw config dict before any compute.

    Raises:
        InvalidConfigError: naming the first violated constraint.
    """
    _reject_unknown("", raw, TOP_LEVEL_KEYS)
    resolved = copy.deepcopy(raw)
    try:
        train, resolved["train"] = _parse_train(raw.get("train", {}))
    except (TrainingConfigError, LossInputError, ScheduleError, TypeError) as e:
        raise InvalidConfigError(f"train: {e}") from e

    procedure = raw.get("procedure", "stda")
    if procedure not in PROCEDURES:
        raise InvalidConfigError(f"'procedure' must be one of {PROCEDURES}, got '{procedure}'")
    resolved["procedure"] = procedure
    baseline = raw.get("baseline")
    if procedure == "baseline" and baseline not in BASELINE_ORDERINGS:
        raise InvalidConfigError(f"'baseline' must be one of {BASELINE_ORDERINGS}, got {baseline!r}")

    if "source" not in raw:
        raise InvalidConfigError("'source' is required")
    source, resolved["source"] = _parse_domain(
        "source", raw["source"], "source", seeds.derive_seed(train.seed, seeds.DATA, 0), base_dir)
    targets_raw = raw.get("targets")
    if not isinstance(targets_raw, list) or not targets_raw:
        raise InvalidConfigError("'targets' must be a non-empty list")
    targets, resolved["targets"] = [], []
    for i, target_raw in enumerate(targets_raw):
        target, target_resolved = _parse_domain(
            f"targets.{i}", target_raw, f"target_{i}", seeds.derive_seed(train.seed, seeds.DATA, i + 1), base_dir)
        targets.append(target)
        resolved["targets"].append(target_resolved)
    if procedure in ("stda", "baseline") and len(targets) != 1:
        raise InvalidConfigError(f"procedure '{procedure}' needs exactly one target, got {len(targets)}")

    for name in ("teacher", "student"):
        if name not in raw:
            raise InvalidConfigError(f"'{name}' is required")
    classes = raw.get("classes")
    if classes is not None and (isinstance(classes, bool) or not isinstance(classes, int) or classes < 1):
        raise InvalidConfigError(f"'classes' must be a positive integer, got {classes!r}")

    run_name = raw.get("run_name", procedure)
    if not isinstance(run_name, str) or not run_name:
        raise InvalidConfigError("'run_name' must be a non-empty string")
    resolved["run_name"] = run_name

    return ExperimentConfig(
        run_name=run_name,
        procedure=procedure,
        source=source,
        targets=targets,
        teacher=_parse_network("teacher", raw["teacher"]),
        student=_parse_network("student", raw["student"]),
        train=train,
        baseline=baseline,
        classes=classes,
        output_dir=raw.get("output_dir"),
        resolved=resolved,
        base_dir=base_dir,
    )


def read_config(path: Union[str, Path]) -> dict:
    path = Path(path)
    if not path.is_file():
        raise InvalidConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise InvalidConfigError(f"{path}: invalid JSON ({e})") from e
    if not isinstance(raw, dict):
        raise InvalidConfigError(f"{path}: top level must be an object")
    return raw


def load_config(path: Union[str, Path], overrides: Sequence[str] = (), seed: Optional[int] = None) -> ExperimentConfig:
    """Reads, overrides and validates a config file. `seed` sets train.seed."""
    raw = read_config(path)
    extra = [f"train.seed={seed}"] if seed is not None else []
    raw = apply_overrides(raw, [*overrides, *extra], TRAIN_KEYS)
    config = parse_and_validate_config(raw, Path(path).resolve().parent)
    logger.debug("Config loaded", extra={"path": str(path), "run_name": config.run_name})
    return config


def load_domains(config: ExperimentConfig) -> tuple[DomainDataset, list[DomainDataset]]:
    try:
        return config.load_domains()
    except DatasetError as e:
        raise InvalidConfigError(str(e)) from e
