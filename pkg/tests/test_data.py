# tests/test_data.py
import numpy as np
import pytest

from kdda.data import (
    BatchPlan,
    CsvSchema,
    DatasetError,
    DomainDataset,
    batches,
    gen_blobs,
    gen_two_moons,
    load_csv,
    paired_batches,
    save_csv,
    steps_per_epoch,
)


@pytest.fixture(scope="module")
def moons() -> DomainDataset:
    return gen_two_moons(100, seed=4)


def test_two_moons_is_deterministic_and_balanced(moons):
    again = gen_two_moons(100, seed=4)
    assert moons.features.tobytes() == again.features.tobytes()
    assert np.array_equal(moons.labels, again.labels)
    assert np.bincount(moons.labels).tolist() == [50, 50]
    assert moons.class_count == 2
    assert moons.generator_params["seed"] == 4


def test_rotation_preserves_norms_and_labels(moons):
    rotated = gen_two_moons(100, rotation_deg=90.0, seed=4)
    np.testing.assert_allclose(np.linalg.norm(rotated.features, axis=1), np.linalg.norm(moons.features, axis=1))
    np.testing.assert_allclose(rotated.features[:, 0], -moons.features[:, 1], atol=1e-12)
    assert np.array_equal(rotated.labels, moons.labels)


def test_translation_shifts_every_row(moons):
    shifted = gen_two_moons(100, translation=(1.0, -2.0), seed=4)
    np.testing.assert_allclose(shifted.features - moons.features, np.tile([1.0, -2.0], (100, 1)), atol=1e-12)


def test_label_flips(moons):
    flipped = gen_two_moons(100, label_flip_frac=1.0, seed=4)
    # flipping draws from the rng, so rows come out in another order
    by_point = np.lexsort(moons.features.T)
    flipped_by_point = np.lexsort(flipped.features.T)
    np.testing.assert_array_equal(flipped.features[flipped_by_point], moons.features[by_point])
    assert np.array_equal(flipped.labels[flipped_by_point], 1 - moons.labels[by_point])


def test_generator_validation():
    with pytest.raises(DatasetError, match="at least 2 rows"):
        gen_two_moons(1)
    with pytest.raises(DatasetError, match="translation"):
        gen_two_moons(10, translation=(1.0, 2.0, 3.0))
    with pytest.raises(DatasetError, match="one row per class"):
        gen_blobs(2, [[0, 0], [1, 1], [2, 2]])


def test_blobs_follow_their_centers():
    data = gen_blobs(300, [[0.0, 0.0], [10.0, 10.0], [-10.0, 10.0]], sigma=0.1, seed=1)
    assert data.class_count == 3
    assert np.bincount(data.labels).tolist() == [100, 100, 100]
    np.testing.assert_allclose(data.features[data.labels == 1].mean(axis=0), [10.0, 10.0], atol=0.05)


def test_target_view_hides_labels(moons):
    view = moons.target_view()
    assert view.labels is None
    assert len(view) == 100
    assert not hasattr(view, "evaluation_view")


def test_unlabeled_domain_cannot_be_source_or_evaluated():
    unlabeled = DomainDataset(np.zeros((3, 2)), None, "t")
    with pytest.raises(DatasetError, match="needs labels"):
        unlabeled.source_view()
    with pytest.raises(DatasetError, match="cannot evaluate"):
        unlabeled.evaluation_view()


def test_dataset_arrays_are_read_only(moons):
    with pytest.raises(ValueError):
        moons.features[0, 0] = 1.0


def test_dataset_validation():
    with pytest.raises(DatasetError, match="N x d"):
        DomainDataset(np.zeros((0, 2)), None, "x")
    with pytest.raises(DatasetError, match="integers"):
        DomainDataset(np.zeros((2, 2)), [0.5, 1.0], "x")
    with pytest.raises(DatasetError, match="out of range"):
        DomainDataset(np.zeros((2, 2)), [0, 3], "x", class_count=2)


def test_split_is_seeded_and_disjoint(moons):
    train, holdout = moons.split(0.2, seed=9)
    assert (len(train), len(holdout)) == (80, 20)
    train_again, _ = moons.split(0.2, seed=9)
    assert train.features.tobytes() == train_again.features.tobytes()
    rows = {tuple(r) for r in train.features} | {tuple(r) for r in holdout.features}
    assert len(rows) == 100


def test_split_keeps_one_row_each_side():
    tiny = DomainDataset(np.arange(4.0).reshape(2, 2), [0, 1], "tiny")
    train, holdout = tiny.split(0.01)
    assert (len(train), len(holdout)) == (1, 1)
    with pytest.raises(DatasetError, match="holdout fraction"):
        tiny.split(1.0)


def test_concat_merges_domains(moons):
    other = gen_two_moons(30, rotation_deg=45.0, seed=1, domain_id="rot45")
    mixed = DomainDataset.concat([moons, other], "mixed")
    assert len(mixed) == 130
    assert mixed.domain_id == "mixed"
    assert mixed.generator_params == {"concat": ["source", "rot45"]}


def test_batches_cover_every_row_once():
    data = DomainDataset(np.arange(20.0).reshape(10, 2), list(range(10)), "s", class_count=10)
    sizes = [len(b) for b in batches(data, BatchPlan(3, seed=1))]
    assert sizes == [3, 3, 3, 1]
    seen = np.concatenate([b.labels for b in batches(data, BatchPlan(3, seed=1))])
    assert sorted(seen.tolist()) == list(range(10))


def test_batches_of_target_view_carry_no_labels(moons):
    assert all(b.labels is None for b in batches(moons.target_view(), BatchPlan(16)))


def test_paired_batches_cycle_the_shorter_stream():
    source = DomainDataset(np.arange(10.0).reshape(10, 1), [0] * 10, "s")
    target = DomainDataset(np.arange(4.0).reshape(4, 1) + 100.0, None, "t")
    steps = list(paired_batches([source, target], BatchPlan(3, seed=2)))
    assert len(steps) == steps_per_epoch([source, target], 3) == 4
    assert all(len(s) == len(t) for s, t in steps)
    source_rows = np.concatenate([s.features[:, 0] for s, _ in steps])
    assert sorted(source_rows.tolist()) == list(range(10))
    target_rows = np.concatenate([t.features[:, 0] for _, t in steps]) - 100.0
    assert len(target_rows) == 10
    # each cycle of the short stream is a full permutation
    assert sorted(target_rows[:4].tolist()) == [0.0, 1.0, 2.0, 3.0]
    assert sorted(target_rows[4:8].tolist()) == [0.0, 1.0, 2.0, 3.0]


def test_batch_order_depends_on_epoch():
    data = DomainDataset(np.arange(50.0).reshape(25, 2), None, "t")
    plan = BatchPlan(25, seed=0)
    first = batches(data, plan.for_epoch(0))[0].features
    assert not np.array_equal(first, batches(data, plan.for_epoch(1))[0].features)
    assert np.array_equal(first, batches(data, plan.for_epoch(0))[0].features)


def test_batch_plan_validation():
    with pytest.raises(DatasetError, match="batch size"):
        BatchPlan(0)


def test_csv_round_trip(tmp_path, moons):
    path = save_csv(moons, tmp_path / "moons.csv")
    loaded = load_csv(path, CsvSchema(feature_dim=2, class_count=2))
    assert loaded.features.tobytes() == moons.features.tobytes()
    assert np.array_equal(loaded.labels, moons.labels)
    assert loaded.domain_id == "source"


def test_csv_without_labels(tmp_path, moons):
    path = save_csv(moons, tmp_path / "unlabeled.csv", include_labels=False)
    assert not load_csv(path).has_labels
    with pytest.raises(DatasetError, match="'label'"):
        load_csv(path, CsvSchema(require_labels=True))


def test_csv_errors_name_the_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("f0,f1,label,domain\n0.1,0.2,0,s\n0.3,oops,1,s\n")
    with pytest.raises(DatasetError, match=r"bad\.csv:3: non-numeric"):
        load_csv(path)


def test_csv_mixed_domains_need_selection(tmp_path):
    path = tmp_path / "mixed.csv"
    path.write_text("f0,label,domain\n0.1,0,a\n0.2,1,b\n0.3,1,b\n")
    with pytest.raises(DatasetError, match="mixes domains"):
        load_csv(path)
    picked = load_csv(path, CsvSchema(domain="b"))
    assert len(picked) == 2 and picked.domain_id == "b"


def test_csv_missing_file(tmp_path):
    with pytest.raises(DatasetError, match="file not found"):
        load_csv(tmp_path / "none.csv")
