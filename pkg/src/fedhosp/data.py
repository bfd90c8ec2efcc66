"""Synthetic episode generation, CSV round-trip, splitting and partitioning.

The generator is a stand-in for restricted-access clinical data: it draws
per-variable baselines and noise scales once per run, then shifts the
positive class upward by ``effect_size`` noise-standard-deviations, giving
a controllable, seed-reproducible signal for end-to-end experiments.

File formats (written with headers):

    measurements.csv:  episode_id,variable,hour,value
    labels.csv:        episode_id,label

Every function here is deterministic in its seed; none keeps global state.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import HORIZON_HOURS, Episode
from .federation import HospitalDataset

__all__ = [
    "DEFAULT_VARIABLES",
    "SyntheticConfig",
    "PartitionPlan",
    "variable_names",
    "generate",
    "save_episodes",
    "load_episodes",
    "split_train_test",
    "partition_rows",
    "partition",
]

DEFAULT_VARIABLES = (
    "heart_rate",
    "systolic_bp",
    "diastolic_bp",
    "respiratory_rate",
    "temperature",
    "oxygen_saturation",
    "glucose",
)


def variable_names(n_variables: int) -> tuple[str, ...]:
    """First `n_variables` canonical names, padded with generic ones past 7."""
    if n_variables < 1:
        raise ValueError(f"n_variables must be >= 1, got {n_variables}")
    names = list(DEFAULT_VARIABLES[:n_variables])
    names += [f"signal_{i}" for i in range(len(names), n_variables)]
    return tuple(names)


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the synthetic episode generator."""

    n_episodes: int
    n_variables: int = 7
    prevalence: float = 0.15
    effect_size: float = 1.0
    points_per_variable: tuple[int, int] = (4, 12)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_episodes < 2:
            raise ValueError(f"n_episodes must be >= 2, got {self.n_episodes}")
        if not 0.0 < self.prevalence < 1.0:
            raise ValueError(f"prevalence must lie in (0,1), got {self.prevalence}")
        lo, hi = self.points_per_variable
        if lo < 0 or hi < lo:
            raise ValueError(f"points_per_variable range invalid: ({lo}, {hi})")
        n_pos = round(self.prevalence * self.n_episodes)
        if n_pos < 1 or n_pos >= self.n_episodes:
            raise ValueError(
                f"prevalence {self.prevalence} with n={self.n_episodes} leaves "
                "a class empty"
            )

    @property
    def n_positive(self) -> int:
        return round(self.prevalence * self.n_episodes)


def generate(cfg: SyntheticConfig) -> list[Episode]:
    """Draw a synthetic episode set; byte-identical across calls per seed.

    Exactly ``round(prevalence * n)`` episodes are positive, chosen by a
    seeded shuffle. Per variable, a baseline level and noise scale are drawn
    once; positive episodes' values are shifted by effect_size * noise_std.
    """
    rng = np.random.default_rng(cfg.seed)
    variables = variable_names(cfg.n_variables)
    baselines = rng.uniform(20.0, 120.0, cfg.n_variables)
    noise_stds = rng.uniform(1.0, 10.0, cfg.n_variables)
    positive = np.zeros(cfg.n_episodes, dtype=bool)
    positive[rng.permutation(cfg.n_episodes)[: cfg.n_positive]] = True

    lo, hi = cfg.points_per_variable
    episodes = []
    for i in range(cfg.n_episodes):
        series: dict[str, list[tuple[float, float]]] = {}
        for j, var in enumerate(variables):
            n_pts = int(rng.integers(lo, hi, endpoint=True))
            hours = np.sort(rng.uniform(0.0, HORIZON_HOURS, n_pts))
            shift = cfg.effect_size * noise_stds[j] if positive[i] else 0.0
            values = baselines[j] + shift + rng.normal(0.0, noise_stds[j], n_pts)
            series[var] = [(float(h), float(v)) for h, v in zip(hours, values)]
        episodes.append(
            Episode(episode_id=f"e{i:05d}", series=series, label=int(positive[i]))
        )
    return episodes


def save_episodes(episodes, measurements_path, labels_path) -> None:
    """Write episodes to the two-file CSV format; floats round-trip exactly."""
    episodes = list(episodes)
    for path in (measurements_path, labels_path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(measurements_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["episode_id", "variable", "hour", "value"])
        for ep in episodes:
            for var, points in ep.series.items():
                for hour, value in points:
                    writer.writerow([ep.episode_id, var, repr(hour), repr(value)])
    with open(labels_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["episode_id", "label"])
        for ep in episodes:
            writer.writerow([ep.episode_id, ep.label])


def _parse_error(path, line_no: int, problem: str) -> ValueError:
    return ValueError(f"{Path(path).name}, line {line_no}: {problem}")


def load_episodes(measurements_path, labels_path) -> list[Episode]:
    """Read the two-file CSV format back into Episode records.

    The labels file defines which episodes exist (an episode may have zero
    measurements); a measurement row naming an unlisted episode is an error.
    """
    labels: dict[str, int] = {}
    with open(labels_path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["episode_id", "label"]:
            raise _parse_error(labels_path, 1, f"unexpected header {header!r}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise _parse_error(labels_path, line_no, f"expected 2 columns, got {len(row)}")
            eid, label_text = row
            if label_text not in ("0", "1"):
                raise _parse_error(labels_path, line_no, f"label must be 0 or 1, got {label_text!r}")
            if eid in labels:
                raise _parse_error(labels_path, line_no, f"duplicate label row for episode {eid!r}")
            labels[eid] = int(label_text)

    series: dict[str, dict[str, list[tuple[float, float]]]] = {eid: {} for eid in labels}
    with open(measurements_path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["episode_id", "variable", "hour", "value"]:
            raise _parse_error(measurements_path, 1, f"unexpected header {header!r}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise _parse_error(measurements_path, line_no, f"expected 4 columns, got {len(row)}")
            eid, var, hour_text, value_text = row
            if eid not in labels:
                raise _parse_error(
                    measurements_path, line_no,
                    f"episode {eid!r} has measurements but no label row",
                )
            try:
                hour, value = float(hour_text), float(value_text)
            except ValueError:
                raise _parse_error(
                    measurements_path, line_no, f"non-numeric hour/value {row[2:]!r}"
                ) from None
            if not 0.0 <= hour <= HORIZON_HOURS:
                raise _parse_error(
                    measurements_path, line_no,
                    f"hour {hour!r} outside [0, {HORIZON_HOURS:g}]",
                )
            if not np.isfinite(value):
                raise _parse_error(measurements_path, line_no, f"non-finite value {value!r}")
            series[eid].setdefault(var, []).append((hour, value))

    episodes = []
    for eid, label in labels.items():
        for points in series[eid].values():
            points.sort(key=lambda p: p[0])
        episodes.append(Episode(episode_id=eid, series=series[eid], label=label))
    return episodes


def split_train_test(episodes, test_fraction: float, seed: int) -> tuple[list[Episode], list[Episode]]:
    """Label-stratified random split; deterministic per seed.

    Per class, ``round(test_fraction * n_class)`` episodes go to the test
    side; both sides must keep at least one episode of each class.
    """
    episodes = list(episodes)
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie strictly in (0,1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    test_idx: set[int] = set()
    for label in (0, 1):
        class_idx = [i for i, ep in enumerate(episodes) if ep.label == label]
        n_test = round(test_fraction * len(class_idx))
        if n_test < 1 or n_test >= len(class_idx):
            raise ValueError(
                f"class {label} has {len(class_idx)} episodes; test_fraction "
                f"{test_fraction} leaves train or test empty for it"
            )
        order = rng.permutation(len(class_idx))
        test_idx.update(class_idx[i] for i in order[:n_test])
    train = [ep for i, ep in enumerate(episodes) if i not in test_idx]
    test = [ep for i, ep in enumerate(episodes) if i in test_idx]
    return train, test


@dataclass(frozen=True)
class PartitionPlan:
    """How to split one dataset across K hospitals.

    ``equal_iid`` shuffles and deals near-equal shards. ``label_skew`` draws
    per-class shard proportions from a symmetric Dirichlet(skew_alpha), the
    same proportions for train and test, giving non-IID label mixes; smaller
    alpha means more skew.
    """

    strategy: str
    n_hospitals: int
    skew_alpha: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.strategy not in ("equal_iid", "label_skew"):
            raise ValueError(
                f"unknown partition strategy {self.strategy!r}; "
                "expected 'equal_iid' or 'label_skew'"
            )
        if self.n_hospitals < 1:
            raise ValueError(f"n_hospitals must be >= 1, got {self.n_hospitals}")
        if self.strategy == "label_skew" and self.skew_alpha <= 0.0:
            raise ValueError(f"skew_alpha must be positive, got {self.skew_alpha}")


def _largest_remainder_counts(proportions: np.ndarray, total: int) -> np.ndarray:
    """Integer shard sizes summing to total, closest to the proportions."""
    raw = proportions * total
    counts = np.floor(raw).astype(np.int64)
    for i in np.argsort(-(raw - counts), kind="stable")[: total - counts.sum()]:
        counts[i] += 1
    return counts


def partition_rows(x, y, plan: PartitionPlan) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split one (rows, labels) set into K disjoint, complete shards."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y).reshape(-1)
    n, k = y.size, plan.n_hospitals
    if x.shape[0] != n:
        raise ValueError(f"rows and labels disagree in length: {x.shape[0]} vs {n}")
    if k > n:
        raise ValueError(f"cannot split {n} rows across {k} hospitals")

    rng = np.random.default_rng(plan.seed)
    if plan.strategy == "equal_iid":
        shard_indices = np.array_split(rng.permutation(n), k)
    else:
        # One Dirichlet draw per class, before any shuffling, so train and
        # test calls sharing a plan see identical shard proportions.
        proportions = {
            label: rng.dirichlet(np.full(k, plan.skew_alpha)) for label in (0, 1)
        }
        shard_indices = [[] for _ in range(k)]
        for label in (0, 1):
            class_idx = np.flatnonzero(y == label)
            class_idx = class_idx[rng.permutation(class_idx.size)]
            counts = _largest_remainder_counts(proportions[label], class_idx.size)
            start = 0
            for shard, count in zip(shard_indices, counts):
                shard.extend(class_idx[start : start + count])
                start += count
        # Dirichlet tails can starve a shard entirely; repair by moving one
        # row at a time from the currently largest shard.
        while any(len(s) == 0 for s in shard_indices):
            donor = max(range(k), key=lambda i: len(shard_indices[i]))
            receiver = next(i for i in range(k) if not shard_indices[i])
            shard_indices[receiver].append(shard_indices[donor].pop())
        shard_indices = [np.array(sorted(s), dtype=np.int64) for s in shard_indices]

    return [(x[idx], y[idx]) for idx in shard_indices]


def partition(train_x, train_y, test_x, test_y, plan: PartitionPlan) -> list[HospitalDataset]:
    """Deal train and test rows to K hospitals (ids 1..K) under one plan."""
    train_shards = partition_rows(train_x, train_y, plan)
    test_shards = partition_rows(test_x, test_y, plan)
    return [
        HospitalDataset(
            hospital_id=k + 1,
            train_x=tr_x, train_y=tr_y,
            test_x=te_x, test_y=te_y,
        )
        for k, ((tr_x, tr_y), (te_x, te_y)) in enumerate(zip(train_shards, test_shards))
    ]
