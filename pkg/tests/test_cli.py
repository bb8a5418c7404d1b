# tests/test_cli.py
import csv
import json
import math
from pathlib import Path

import pytest

from kdda.cli.commands import aggregate_sweep, parse_axes
from kdda.cli.config import TRAIN_KEYS, load_config, parse_and_validate_config
from kdda.cli.errors import InvalidConfigError
from kdda.cli.main import EXIT_INVALID, main
from kdda.cli.overrides import apply_overrides, parse_value
from kdda.cli.presets import PRESETS, apply_preset
from kdda.settings import AppSettings, settings

ROOT_DIR = Path(__file__).resolve().parent.parent


def minimal_config(**train) -> dict:
    return {
        "run_name": "tiny",
        "procedure": "stda",
        "source": {"generator": "two_moons", "n": 40},
        "targets": [{"generator": "two_moons", "n": 30, "rotation_deg": 30}],
        "teacher": {"hidden": [8]},
        "student": {"hidden": [4]},
        "train": {"epochs": 1, "batch_size": 16, "tau": 2.0, **train},
    }


@pytest.fixture
def config_file(tmp_path) -> Path:
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(minimal_config()))
    return path


def read_rows(path: Path) -> list[dict]:
    with path.open(newline="") as f:
        return list(csv.DictReader(f))


def test_train_writes_every_artifact(tmp_path, config_file):
    out = tmp_path / "run"
    assert main(["train", "--config", str(config_file), "--out", str(out)]) == 0
    for name in ("metrics.csv", "summary.json", "config.resolved.json", "student.ckpt", "teacher.ckpt"):
        assert (out / name).is_file(), name
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary["final_accuracy"]["student"]) == {"source", "target_0"}
    assert summary["procedure"] == "stda"
    assert 0.0 <= summary["student_target_accuracy"] <= 1.0
    assert read_rows(out / "metrics.csv")[0]["run"] == "tiny"


def test_zero_epochs_gives_empty_metrics(tmp_path, config_file):
    out = tmp_path / "run"
    assert main(["train", "--config", str(config_file), "--out", str(out), "--override", "epochs=0"]) == 0
    assert (out / "metrics.csv").read_text() == "run,epoch,model,domain,metric,value\n"
    assert json.loads((out / "summary.json").read_text())["student_target_accuracy"] is None


def test_resolved_config_reproduces_the_run(tmp_path, config_file):
    first, second = tmp_path / "first", tmp_path / "second"
    assert main(["train", "--config", str(config_file), "--out", str(first), "--seed", "3"]) == 0
    assert main(["train", "--config", str(first / "config.resolved.json"), "--out", str(second)]) == 0
    assert (first / "student.ckpt").read_bytes() == (second / "student.ckpt").read_bytes()
    assert json.loads((first / "summary.json").read_text()) == json.loads((second / "summary.json").read_text())
    resolved = json.loads((first / "config.resolved.json").read_text())
    assert resolved["train"]["seed"] == 3
    assert "seed" in resolved["source"] and "seed" in resolved["targets"][0]


def test_missing_config_names_the_path(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert main(["train", "--config", str(missing)]) == EXIT_INVALID
    assert str(missing) in capsys.readouterr().err


@pytest.mark.parametrize("mutate,message", [
    (lambda c: c["train"].update(bogus=1), "unknown key 'train.bogus'"),
    (lambda c: c.update(colour="red"), "unknown key 'colour'"),
    (lambda c: c["targets"].append({"n": 30}), "exactly one target"),
    (lambda c: c["train"].update(epochs="many"), "'train.epochs' must be an integer"),
    (lambda c: c["train"].update(uda_method="coral"), "uda_method"),
    (lambda c: c["source"].update(generator="spiral"), "'source.generator'"),
    (lambda c: c.update(procedure="magic"), "'procedure'"),
    (lambda c: c.pop("student"), "'student' is required"),
])
def test_invalid_configs_exit_2_naming_the_constraint(tmp_path, capsys, mutate, message):
    raw = minimal_config()
    mutate(raw)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(raw))
    assert main(["train", "--config", str(path), "--out", str(tmp_path / "out")]) == EXIT_INVALID
    assert message in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_unexpected_failures_exit_1(mocker, tmp_path, config_file, capsys):
    mocker.patch("kdda.cli.commands.train_stda", side_effect=RuntimeError("boom"))
    assert main(["train", "--config", str(config_file), "--out", str(tmp_path / "out")]) == 1
    assert "RuntimeError: boom" in capsys.readouterr().err


def test_overrides_resolve_bare_and_dotted_keys():
    raw = minimal_config()
    resolved = apply_overrides(raw, ["epochs=5", "targets.0.rotation_deg=45", "run_name=other",
                                     "train.kernel={\"strategy\": \"fixed\", \"bandwidths\": [1.0]}"], TRAIN_KEYS)
    assert resolved["train"]["epochs"] == 5
    assert resolved["targets"][0]["rotation_deg"] == 45
    assert resolved["run_name"] == "other"
    assert resolved["train"]["kernel"]["strategy"] == "fixed"
    assert raw["train"]["epochs"] == 1


@pytest.mark.parametrize("override,message", [
    ("epochs", "key=value"),
    ("targets.3.n=5", "out of range"),
    ("targets.x.n=5", "not a list index"),
])
def test_bad_overrides(override, message):
    with pytest.raises(InvalidConfigError, match=message):
        apply_overrides(minimal_config(), [override], TRAIN_KEYS)


def test_parse_value():
    assert parse_value("3") == 3
    assert parse_value("0.5") == 0.5
    assert parse_value("[1, 2]") == [1, 2]
    assert parse_value("true") is True
    assert parse_value("revgrad") == "revgrad"


def test_preset_fills_unset_keys():
    config = parse_and_validate_config(minimal_config(preset="digits"))
    train = config.train
    assert train.epochs == 1
    assert train.weights.tau == 2.0
    assert train.weights.gamma == PRESETS["digits"]["gamma"]
    assert train.weights.alpha_dc == train.weights.alpha_ce == 0.5
    assert train.teacher_optimizer.learning_rate == 0.01
    assert config.resolved["train"]["beta_end"] == 0.5


def test_imageclef_preset_uses_separate_learning_rates():
    merged = apply_preset({"preset": "imageclef", "teacher_optimizer": {"momentum": 0.5}})
    assert merged["teacher_optimizer"] == {"learning_rate": 0.0001, "weight_decay": 0.0005, "momentum": 0.5}
    assert merged["student_optimizer"]["learning_rate"] == 0.001


def test_alpha_binds_both_weights_unless_explicit():
    weights = parse_and_validate_config(minimal_config(alpha=0.8, alpha_ce=0.2)).train.weights
    assert weights.alpha_dc == 0.8
    assert weights.alpha_ce == 0.2


def test_unknown_preset():
    with pytest.raises(InvalidConfigError, match="'train.preset'"):
        parse_and_validate_config(minimal_config(preset="mnist"))


def test_csv_domains_resolve_relative_to_the_config(tmp_path):
    (tmp_path / "data").mkdir()
    (tmp_path / "data" / "s.csv").write_text("f0,f1,label,domain\n" + "".join(
        f"{i * 0.1},{-i * 0.1},{i % 2},src\n" for i in range(10)))
    raw = minimal_config()
    raw["source"] = {"generator": "csv", "path": "data/s.csv"}
    path = tmp_path / "csv.json"
    path.write_text(json.dumps(raw))
    config = load_config(path)
    assert Path(config.resolved["source"]["path"]).is_absolute()
    source, _ = config.load_domains()
    assert source.domain_id == "src" and len(source) == 10


def test_eval_scores_saved_checkpoints(tmp_path, config_file):
    out = tmp_path / "run"
    assert main(["train", "--config", str(config_file), "--out", str(out)]) == 0
    assert main(["eval", "--out", str(out)]) == 0
    report = json.loads((out / "eval.json").read_text())
    summary = json.loads((out / "summary.json").read_text())
    assert set(report) == {"student", "teacher"}
    assert report["student"] == pytest.approx(summary["final_accuracy"]["student"])


def test_eval_without_checkpoints(tmp_path, config_file):
    out = tmp_path / "empty"
    out.mkdir()
    assert main(["eval", "--out", str(out), "--config", str(config_file)]) == EXIT_INVALID


def test_sweep_over_seeds(tmp_path, config_file):
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", str(config_file), "--out", str(out), "--axis", "seed=1,2,3"]) == 0
    run_dirs = sorted(p for p in out.iterdir() if p.is_dir())
    assert len(run_dirs) == 3
    assert all((d / "summary.json").is_file() for d in run_dirs)
    rows = read_rows(out / "sweep.csv")
    assert list(rows[0]) == ["group", "model", "domain", "metric", "mean", "std", "n"]
    assert {r["group"] for r in rows} == {"all"}
    assert {r["n"] for r in rows} == {"3"}


def test_sweep_with_equal_seeds_matches_single_run(tmp_path, config_file):
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", str(config_file), "--out", str(out), "--axis", "seed=5,5"]) == 0
    single = json.loads(next(out.glob("000__*/summary.json")).read_text())
    rows = read_rows(out / "sweep.csv")
    row = next(r for r in rows if r["model"] == "student" and r["domain"] == "target_0" and r["metric"] == "accuracy")
    assert float(row["mean"]) == pytest.approx(single["final_accuracy"]["student"]["target_0"])
    assert float(row["std"]) == 0.0


def test_sweep_groups_by_non_seed_axes(tmp_path, config_file):
    out = tmp_path / "sweep"
    args = ["sweep", "--config", str(config_file), "--out", str(out),
            "--axis", "targets.0.rotation_deg=0,45", "--axis", "seed=1,2"]
    assert main(args) == 0
    rows = read_rows(out / "sweep.csv")
    assert {r["group"] for r in rows} == {"targets.0.rotation_deg=0", "targets.0.rotation_deg=45"}
    assert {r["n"] for r in rows} == {"2"}


def test_sweep_runs_in_parallel_processes(mocker, tmp_path, config_file):
    mocker.patch.object(settings, "da_threads", 2)
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", str(config_file), "--out", str(out), "--axis", "seed=1,2"]) == 0
    assert len(read_rows(out / "sweep.csv")) > 0


def test_sweep_rejects_empty_value_list(tmp_path, config_file, capsys):
    assert main(["sweep", "--config", str(config_file), "--out", str(tmp_path / "s"), "--axis", "seed="]) == 2
    assert "empty value list" in capsys.readouterr().err


def test_parse_axes_keeps_list_values_whole():
    assert parse_axes(["targets.0.translation=[0,1],[1,0]"]) == [("targets.0.translation", ["[0,1]", "[1,0]"])]


def test_aggregate_sweep_population_std():
    summaries = [{"final_accuracy": {"student": {"t": v}}, "student_target_accuracy": None} for v in (0.5, 0.7)]
    table = aggregate_sweep(["all", "all"], summaries)
    row = table.iloc[0]
    assert row["mean"] == pytest.approx(0.6)
    assert row["std"] == pytest.approx(0.1)
    assert row["n"] == 2


def test_gradcheck_subcommand(capsys):
    assert main(["gradcheck", "--instances", "2"]) == 0
    assert "cases passed" in capsys.readouterr().out


def test_settings_read_the_environment(monkeypatch):
    monkeypatch.setenv("KDDA_OUTPUT_DIR", "elsewhere")
    monkeypatch.setenv("KDDA_CHECKED", "off")
    monkeypatch.setenv("DA_THREADS", "4")
    loaded = AppSettings()
    assert loaded.output_dir == "elsewhere"
    assert loaded.checked_mode is False
    assert loaded.da_threads == 4


@pytest.mark.parametrize("threads", ["zero", "-3", "0"])
def test_settings_clamp_bad_thread_counts(monkeypatch, threads):
    monkeypatch.setenv("DA_THREADS", threads)
    assert AppSettings().da_threads == 1


@pytest.mark.parametrize("path", sorted((ROOT_DIR / "configs").glob("*.json")), ids=lambda p: p.stem)
def test_shipped_configs_train_with_finite_losses(tmp_path, path):
    config = load_config(path, ["epochs=2", "eval_every=1"])
    teacher_spec, student_spec = config.build_specs(config.load_domains()[0])
    assert teacher_spec.param_count() > student_spec.param_count()

    out = tmp_path / path.stem
    assert main(["train", "--config", str(path), "--out", str(out),
                 "--override", "epochs=2", "--override", "eval_every=1"]) == 0
    rows = read_rows(out / "metrics.csv")
    losses = [float(r["value"]) for r in rows if r["metric"] != "accuracy"]
    assert losses and all(math.isfinite(v) for v in losses)
    assert {r["epoch"] for r in rows} == {"0", "1"}
