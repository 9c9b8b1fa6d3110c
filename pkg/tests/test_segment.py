from fractions import Fraction

import numpy as np
import pytest

from ganids.dataio import CleanDataset
from ganids.errors import PlanError
from ganids.gan import GanSpec
from ganids.segment import (
    Condition,
    SegmentationPlan,
    apportion,
    build_plan,
    generate_proportional,
    sample_segment_rows,
    train_per_segment,
)
from ganids.synthetic import desk_dataset
from oracles import largest_remainder

NAMES = ["Destination Port", "Flag", "Const", "x", "y"]


def toy(ports, flags=None, label="Bot", seed=0):
    r = np.random.default_rng(seed)
    n = len(ports)
    flags = np.zeros(n) if flags is None else np.asarray(flags, float)
    X = np.column_stack([ports, flags, np.full(n, 6.0), r.normal(size=n), r.normal(size=n)])
    labels = [label] * n
    # a few rows of another class that must never enter the plan
    X = np.vstack([X, np.column_stack([[80.0, 8080.0], [0, 1], [6, 6], [0, 0], [1, 1]])])
    return CleanDataset.from_arrays(X, NAMES, labels + ["Benign", "Benign"])


def test_port_split_sizes():
    plan = build_plan(toy([8080, 8080, 443]), "Bot", "Destination Port")
    assert [s.size for s in plan.segments] == [2, 1]
    assert plan.segments[0].predicate == [Condition("Destination Port", (8080.0,))]
    assert plan.segments[1].predicate[0].negate


def test_single_port_single_segment():
    plan = build_plan(toy([80] * 5), "Bot", "Destination Port", min_size=30)
    assert len(plan.segments) == 1


def test_sub_split_on_low_cardinality():
    ports = [8080] * 80 + [443] * 40
    flags = [0] * 45 + [1] * 35 + [0] * 40
    plan = build_plan(toy(ports, flags), "Bot", "Destination Port")
    assert [s.size for s in plan.segments] == [45, 35, 40]
    assert plan.segments[0].constant_columns["Flag"] == 0.0
    assert plan.segments[2].constant_columns["Destination Port"] == 443.0


def test_sub_split_respects_min_size():
    ports = [8080] * 80
    flags = [0] * 60 + [1] * 20
    plan = build_plan(toy(ports, flags), "Bot", "Destination Port", min_size=30)
    assert len(plan.segments) == 1


def test_plan_is_partition_and_predicates_hold():
    ds = desk_dataset(0)
    plan = build_plan(ds, "Botnet", "Destination Port")
    all_rows = np.concatenate([s.row_indices for s in plan.segments])
    assert sorted(all_rows.tolist()) == np.flatnonzero(ds.labels == "Botnet").tolist()
    for s in plan.segments:
        rows = ds.features[s.row_indices]
        assert s.satisfied_by(rows, list(ds.feature_names)).all()
        for c, v in s.constant_columns.items():
            assert (rows[:, ds.feature_index(c)] == v).all()
    # the 8080 side holds most of the class
    on = sum(s.size for s in plan.segments if not s.predicate[0].negate)
    assert on > plan.total_rows / 2


def test_plan_deterministic_and_roundtrip(tmp_path):
    ds = desk_dataset(0)
    a = build_plan(ds, "Botnet", "Destination Port")
    b = build_plan(ds, "Botnet", "Destination Port")
    assert a.to_dict() == b.to_dict()
    a.save(tmp_path / "p.json")
    assert SegmentationPlan.load(tmp_path / "p.json").to_dict() == a.to_dict()


def test_apportion_examples():
    assert apportion([3, 5], 2).tolist() == [6, 10]
    got = apportion([3, 3, 3], 1.5)
    assert got.sum() == 14 and got.tolist() == largest_remainder([3, 3, 3], Fraction(3, 2))
    assert apportion([1956], 4).tolist() == [7824]


def test_apportion_matches_oracle(rng):
    for _ in range(50):
        sizes = rng.integers(1, 200, size=rng.integers(1, 6)).tolist()
        k = Fraction(int(rng.integers(1, 800)), 8)
        assert apportion(sizes, float(k)).tolist() == largest_remainder(sizes, k)


@pytest.fixture(scope="module")
def desk_plan_and_gens():
    ds = desk_dataset(0)
    plan = build_plan(ds, "Botnet", "Destination Port")
    gens = train_per_segment(plan, ds, GanSpec.default("wgan", 1, steps=20, batch_size=32, seed=3))
    return ds, plan, gens


def test_generator_dims_and_seeds(desk_plan_and_gens):
    ds, plan, gens = desk_plan_and_gens
    assert list(gens) == [s.id for s in plan.segments]
    for s in plan.segments:
        g = gens[s.id]
        assert g.spec.data_dim == len(ds.feature_names) - len(s.constant_columns)
        assert not set(g.feature_names) & set(s.constant_columns)
    assert len({g.spec.seed for g in gens.values()}) == len(gens)


def test_generated_rows_satisfy_predicates(desk_plan_and_gens):
    ds, plan, gens = desk_plan_and_gens
    names = list(ds.feature_names)
    for s in plan.segments:
        rows = sample_segment_rows(gens[s.id], 200, names, seed=1)
        assert s.satisfied_by(rows, names).all()
        for c, v in s.constant_columns.items():
            assert (rows[:, names.index(c)] == v).all()


def test_generate_proportional_counts(desk_plan_and_gens):
    ds, plan, gens = desk_plan_and_gens
    for k in (1, 1.5, 4, 0.37):
        out = generate_proportional(plan, gens, k)
        assert out.n_rows == int(np.floor(k * plan.total_rows + 0.5))
        assert set(out.labels.tolist()) == {"Botnet"}


def test_generate_missing_generator(desk_plan_and_gens):
    _, plan, gens = desk_plan_and_gens
    with pytest.raises(PlanError):
        generate_proportional(plan, {k: v for k, v in list(gens.items())[1:]}, 2)


def test_small_segment_rejected():
    plan = build_plan(toy([8080] * 40 + [443] * 5), "Bot", "Destination Port", min_size=30)
    with pytest.raises(PlanError, match="below the minimum"):
        train_per_segment(plan, toy([8080] * 40 + [443] * 5), GanSpec.default("vanilla", 1, steps=1))


def test_ctgan_per_segment_labels(desk_plan_and_gens):
    ds, plan, _ = desk_plan_and_gens
    gens = train_per_segment(plan, ds, GanSpec.default("ctgan", 1, steps=3, batch_size=16))
    g = next(iter(gens.values()))
    assert g.label_names == ("Botnet",) and g.spec.label_dim == 1
    assert generate_proportional(plan, gens, 2).n_rows == 400
