# tests/test_acceptance.py
"""
Directional experiments on rotated two-moons, averaged over five seeds.
Slow; run with `pytest -m slow`.
"""
from dataclasses import replace
from typing import Callable

import numpy as np
import pytest

from kdda.data import gen_two_moons
from kdda.losses import LossWeights
from kdda.nets import build_mlp_spec
from kdda.trainers import (
    KD_THEN_UDA,
    SOURCE_ONLY,
    UDA_MMD,
    UDA_ONLY,
    UDA_REVGRAD,
    UDA_THEN_KD,
    SgdConfig,
    TrainConfig,
    mean_target_accuracy,
    train_baseline,
    train_mixed_target,
    train_mtda,
    train_per_target,
    train_stda,
)

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2, 3, 4)
TEACHER = build_mlp_spec(2, [64, 64], 2)
STUDENT = build_mlp_spec(2, [16, 16], 2)


@pytest.fixture(scope="module")
def source():
    return gen_two_moons(400, seed=10, domain_id="source")


@pytest.fixture(scope="module")
def rotated30():
    return gen_two_moons(400, rotation_deg=30, seed=11, domain_id="rot30")


@pytest.fixture(scope="module")
def three_targets():
    return [gen_two_moons(400, rotation_deg=deg, seed=20 + i, domain_id=f"rot{deg}")
            for i, deg in enumerate((20, 40, 60))]


@pytest.fixture(scope="module")
def cfg() -> TrainConfig:
    return TrainConfig(
        epochs=40, batch_size=32,
        weights=LossWeights(tau=2.0, gamma=0.5, alpha_dc=0.5, alpha_ce=0.5),
        beta_start=0.1, beta_end=0.5,
        teacher_optimizer=SgdConfig(learning_rate=0.02), student_optimizer=SgdConfig(learning_rate=0.05),
        domain_hidden=(32, 32), eval_every=40,
    )


def seed_mean(run: Callable[[int], float]) -> float:
    return float(np.mean([run(seed) for seed in SEEDS]))


@pytest.fixture(scope="module")
def source_only_30(source, rotated30, cfg) -> float:
    return seed_mean(lambda s: train_baseline(
        SOURCE_ONLY, None, STUDENT, source, rotated30, replace(cfg, seed=s)).final_target_accuracy())


def test_source_training_learns_the_source(source, rotated30, cfg):
    result = train_baseline(SOURCE_ONLY, None, STUDENT, source, rotated30, cfg)
    final = result.metrics[-1].epoch
    source_acc = [m.accuracy for m in result.metrics if m.epoch == final and m.domain == "source"]
    assert source_acc[0] > 0.85


@pytest.mark.parametrize("uda_method", [UDA_MMD, UDA_REVGRAD])
@pytest.mark.parametrize("kd_mode", ["logits", "feature"])
def test_joint_student_beats_source_only_by_ten_points(source, rotated30, cfg, source_only_30, uda_method, kd_mode):
    run_cfg = replace(cfg, uda_method=uda_method, kd_mode=kd_mode)
    joint = seed_mean(lambda s: train_stda(
        TEACHER, STUDENT, source, rotated30, replace(run_cfg, seed=s)).final_target_accuracy())
    assert joint >= source_only_30 + 0.10


def ordering_accuracies(source, target, cfg) -> dict[str, float]:
    accs = {
        ordering: seed_mean(lambda s: train_baseline(
            ordering, TEACHER, STUDENT, source, target, replace(cfg, seed=s)).final_target_accuracy())
        for ordering in (UDA_THEN_KD, KD_THEN_UDA, UDA_ONLY)
    }
    accs["joint"] = seed_mean(lambda s: train_stda(
        TEACHER, STUDENT, source, target, replace(cfg, seed=s)).final_target_accuracy())
    return accs


def test_adapt_then_distill_is_the_worst_ordering(source, rotated30, cfg):
    accs = ordering_accuracies(source, rotated30, replace(cfg, kd_mode="feature"))
    others = [v for k, v in accs.items() if k != UDA_THEN_KD]
    assert accs[UDA_THEN_KD] < min(others), accs
    assert accs["joint"] == max(accs.values()), accs


def test_joint_logits_student_beats_adapt_then_distill(source, rotated30, cfg):
    run_cfg = replace(cfg, kd_mode="logits")
    joint = seed_mean(lambda s: train_stda(
        TEACHER, STUDENT, source, rotated30, replace(run_cfg, seed=s)).final_target_accuracy())
    sequential = seed_mean(lambda s: train_baseline(
        UDA_THEN_KD, TEACHER, STUDENT, source, rotated30, replace(run_cfg, seed=s)).final_target_accuracy())
    assert joint > sequential


def test_multi_target_student_matches_dedicated_students(source, three_targets, cfg):
    mtda = seed_mean(lambda s: train_mtda(
        [TEACHER] * 3, STUDENT, source, three_targets, replace(cfg, seed=s)).final_target_accuracy())
    mixed = seed_mean(lambda s: train_mixed_target(
        TEACHER, STUDENT, source, three_targets, replace(cfg, seed=s)).final_target_accuracy())
    dedicated = seed_mean(lambda s: mean_target_accuracy(
        train_per_target(TEACHER, STUDENT, source, three_targets, replace(cfg, seed=s))))
    assert mtda >= mixed
    assert abs(mtda - dedicated) <= 0.05


def test_multi_target_student_reports_every_target(source, three_targets, cfg):
    result = train_mtda([TEACHER] * 3, STUDENT, source, three_targets, cfg)
    last = result.metrics[-1].epoch
    per_target = {m.domain: m.accuracy for m in result.metrics
                  if m.epoch == last and m.model == "student" and m.domain != "source"}
    assert set(per_target) == {"rot20", "rot40", "rot60"}
