"""Generator, CSV round-trip, split and partition tests."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedhosp.data import (
    PartitionPlan,
    SyntheticConfig,
    generate,
    load_episodes,
    partition,
    partition_rows,
    save_episodes,
    split_train_test,
    variable_names,
)
from fedhosp.features import Episode


def test_variable_names():
    assert variable_names(2) == ("heart_rate", "systolic_bp")
    names = variable_names(9)
    assert len(names) == 9 and names[7] == "signal_7"
    with pytest.raises(ValueError):
        variable_names(0)


def test_generate_exact_positive_count():
    episodes = generate(SyntheticConfig(n_episodes=100, prevalence=0.2, seed=1))
    assert sum(ep.label for ep in episodes) == 20
    assert len(episodes) == 100
    assert len({ep.episode_id for ep in episodes}) == 100


def test_generate_deterministic():
    cfg = SyntheticConfig(n_episodes=40, n_variables=3, seed=77)
    assert generate(cfg) == generate(cfg)
    assert generate(cfg) != generate(SyntheticConfig(n_episodes=40, n_variables=3, seed=78))


def test_generate_respects_points_range_and_horizon():
    cfg = SyntheticConfig(n_episodes=20, n_variables=2, points_per_variable=(3, 3), seed=5)
    for ep in generate(cfg):
        for points in ep.series.values():
            assert len(points) == 3
            hours = [h for h, _ in points]
            assert hours == sorted(hours)
            assert all(0.0 <= h <= 48.0 for h in hours)


def test_generate_positive_class_is_shifted():
    episodes = generate(SyntheticConfig(n_episodes=2000, effect_size=1.0, seed=3))
    for var in variable_names(7):
        pos = np.array([v for ep in episodes if ep.label == 1 for _, v in ep.series[var]])
        neg = np.array([v for ep in episodes if ep.label == 0 for _, v in ep.series[var]])
        diff = pos.mean() - neg.mean()
        stderr = np.sqrt(pos.var(ddof=1) / pos.size + neg.var(ddof=1) / neg.size)
        assert diff > 4.0 * stderr  # far beyond chance


def test_generate_degenerate_prevalence_rejected():
    with pytest.raises(ValueError, match="class empty"):
        SyntheticConfig(n_episodes=100, prevalence=0.001)
    with pytest.raises(ValueError, match="class empty"):
        SyntheticConfig(n_episodes=100, prevalence=0.999)
    with pytest.raises(ValueError, match="n_episodes"):
        SyntheticConfig(n_episodes=1)


def test_csv_round_trip(tmp_path):
    episodes = generate(SyntheticConfig(n_episodes=25, n_variables=3, seed=11))
    m, l = tmp_path / "measurements.csv", tmp_path / "labels.csv"
    save_episodes(episodes, m, l)
    assert load_episodes(m, l) == episodes


def test_round_trip_keeps_episode_without_measurements(tmp_path):
    episodes = [
        Episode("a", {"hr": [(1.0, 2.5)]}, 1),
        Episode("b", {}, 0),
    ]
    save_episodes(episodes, tmp_path / "m.csv", tmp_path / "l.csv")
    assert load_episodes(tmp_path / "m.csv", tmp_path / "l.csv") == episodes


def _write(path, text):
    path.write_text(text)
    return path


def test_load_rejects_out_of_range_hour(tmp_path):
    m = _write(tmp_path / "m.csv",
               "episode_id,variable,hour,value\ne1,hr,49.0,80\n")
    l = _write(tmp_path / "l.csv", "episode_id,label\ne1,0\n")
    with pytest.raises(ValueError, match=r"line 2.*49"):
        load_episodes(m, l)


def test_load_rejects_missing_label(tmp_path):
    m = _write(tmp_path / "m.csv",
               "episode_id,variable,hour,value\ne1,hr,1.0,80\ne9,hr,2.0,70\n")
    l = _write(tmp_path / "l.csv", "episode_id,label\ne1,0\n")
    with pytest.raises(ValueError, match="e9"):
        load_episodes(m, l)


def test_load_rejects_malformed_rows(tmp_path):
    l = _write(tmp_path / "l.csv", "episode_id,label\ne1,0\n")
    m = _write(tmp_path / "m.csv", "episode_id,variable,hour,value\ne1,hr,notanhour,80\n")
    with pytest.raises(ValueError, match="line 2"):
        load_episodes(m, l)
    m2 = _write(tmp_path / "m2.csv", "episode_id,variable,hour,value\ne1,hr,1.0\n")
    with pytest.raises(ValueError, match="line 2.*columns"):
        load_episodes(m2, l)
    bad_labels = _write(tmp_path / "l2.csv", "episode_id,label\ne1,2\n")
    with pytest.raises(ValueError, match="line 2"):
        load_episodes(m, bad_labels)


def _labeled_episodes(n_pos, n_neg):
    return (
        [Episode(f"p{i}", {}, 1) for i in range(n_pos)]
        + [Episode(f"n{i}", {}, 0) for i in range(n_neg)]
    )


def test_split_is_stratified():
    train, test = split_train_test(_labeled_episodes(5, 5), 0.2, seed=0)
    assert sum(ep.label for ep in test) == 1 and len(test) == 2
    assert sum(ep.label for ep in train) == 4 and len(train) == 8


def test_split_deterministic_and_disjoint():
    episodes = _labeled_episodes(8, 12)
    a = split_train_test(episodes, 0.25, seed=4)
    b = split_train_test(episodes, 0.25, seed=4)
    assert a == b
    train_ids = {ep.episode_id for ep in a[0]}
    test_ids = {ep.episode_id for ep in a[1]}
    assert not train_ids & test_ids
    assert train_ids | test_ids == {ep.episode_id for ep in episodes}


def test_split_rejects_degenerate_fractions():
    episodes = _labeled_episodes(5, 5)
    for fraction in (0.0, 1.0):
        with pytest.raises(ValueError, match="strictly"):
            split_train_test(episodes, fraction, seed=0)
    with pytest.raises(ValueError, match="class 1"):
        split_train_test(_labeled_episodes(1, 10), 0.3, seed=0)


def test_equal_iid_sizes_differ_by_at_most_one():
    x = np.arange(10, dtype=float).reshape(-1, 1)
    y = np.array([0, 1] * 5)
    shards = partition_rows(x, y, PartitionPlan("equal_iid", 4, seed=2))
    sizes = sorted(s[0].shape[0] for s in shards)
    assert sizes == [2, 2, 3, 3]
    shards2 = partition_rows(x, y, PartitionPlan("equal_iid", 2, seed=2))
    assert [s[0].shape[0] for s in shards2] == [5, 5]


@given(
    n=st.integers(2, 60),
    k=st.integers(1, 5),
    strategy=st.sampled_from(["equal_iid", "label_skew"]),
    seed=st.integers(0, 10_000),
)
@settings(max_examples=120, deadline=None)
def test_partition_disjoint_and_complete(n, k, strategy, seed):
    if k > n:
        return
    rng = np.random.default_rng(seed)
    x = np.arange(n, dtype=float).reshape(-1, 1)  # distinct values track identity
    y = rng.integers(0, 2, n)
    shards = partition_rows(x, y, PartitionPlan(strategy, k, seed=seed))
    assert len(shards) == k
    assert all(sx.shape[0] >= 1 for sx, _ in shards)
    gathered = np.sort(np.concatenate([sx[:, 0] for sx, _ in shards]))
    assert np.array_equal(gathered, np.arange(n, dtype=float))
    for sx, sy in shards:  # labels stay attached to their rows
        assert np.array_equal(sy, y[sx[:, 0].astype(int)])


def test_label_skew_uses_same_proportions_for_train_and_test():
    plan = PartitionPlan("label_skew", 3, skew_alpha=0.3, seed=9)
    y_train = np.array([0] * 60 + [1] * 30)
    y_test = np.array([0] * 20 + [1] * 10)
    train_shards = partition_rows(np.zeros((90, 1)), y_train, plan)
    test_shards = partition_rows(np.zeros((30, 1)), y_test, plan)
    for (_, tr_y), (_, te_y) in zip(train_shards, test_shards):
        # per-class fractions agree up to integer rounding of the smaller set
        for label in (0, 1):
            tr_frac = (tr_y == label).sum() / (y_train == label).sum()
            te_frac = (te_y == label).sum() / (y_test == label).sum()
            assert abs(tr_frac - te_frac) < 0.12


def test_partition_rejects_more_hospitals_than_rows():
    with pytest.raises(ValueError, match="cannot split"):
        partition_rows(np.zeros((2, 1)), np.array([0, 1]), PartitionPlan("equal_iid", 3))


def test_partition_builds_hospital_datasets():
    rng = np.random.default_rng(0)
    hospitals = partition(
        rng.normal(size=(12, 4)), rng.integers(0, 2, 12),
        rng.normal(size=(6, 4)), rng.integers(0, 2, 6),
        PartitionPlan("equal_iid", 3, seed=1),
    )
    assert [h.hospital_id for h in hospitals] == [1, 2, 3]
    assert sum(h.n_train for h in hospitals) == 12
    assert sum(h.n_test for h in hospitals) == 6
    assert all(h.train_x.shape[1] == 4 for h in hospitals)


def test_partition_plan_validation():
    with pytest.raises(ValueError, match="strategy"):
        PartitionPlan("random", 2)
    with pytest.raises(ValueError, match="skew_alpha"):
        PartitionPlan("label_skew", 2, skew_alpha=0.0)
