"""Fixed-length feature vectors from irregular 48-hour vital-sign episodes.

Each variable's measurement series is sliced into seven time windows over
the fixed [0, 48] hour horizon, six summary statistics are computed per
window, and the resulting 42-per-variable features are concatenated
variable-major. A min-max scaler then maps each feature into [-1, 1] based
on training-set extremes.

Window layout (q in {0.1, 0.25, 0.5}):

    full      [0, 48]        both ends closed
    first-q   [0, 48q)       half-open at the interior boundary
    last-q    [48(1-q), 48]  both ends closed

so e.g. a point at exactly hour 24 belongs to last-50% but not first-50%.
Windows are measured on the fixed horizon, not the observed span, which
keeps features comparable across episodes with different coverage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "HORIZON_HOURS",
    "WINDOW_NAMES",
    "STAT_NAMES",
    "Episode",
    "FeatureMatrix",
    "Scaler",
    "slice_windows",
    "window_stats",
    "extract",
    "feature_names",
    "fit_scaler",
    "transform",
]

HORIZON_HOURS = 48.0
WINDOW_NAMES = ("full", "first10", "first25", "first50", "last10", "last25", "last50")
STAT_NAMES = ("max", "min", "mean", "std", "skew", "count")
STATS_PER_VARIABLE = len(WINDOW_NAMES) * len(STAT_NAMES)  # 42

_QUANTS = (0.1, 0.25, 0.5)


@dataclass(frozen=True)
class Episode:
    """One patient admission: per-variable timestamped measurements + outcome.

    ``series`` maps a variable name to its (hour, value) pairs, hours
    ascending within [0, 48]. A variable may be absent entirely.
    """

    episode_id: str
    series: dict[str, list[tuple[float, float]]]
    label: int

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        for name, points in self.series.items():
            prev = -np.inf
            for hour, value in points:
                if not 0.0 <= hour <= HORIZON_HOURS:
                    raise ValueError(
                        f"episode {self.episode_id}: variable {name!r} has hour "
                        f"{hour!r} outside [0, {HORIZON_HOURS:g}]"
                    )
                if not np.isfinite(value):
                    raise ValueError(
                        f"episode {self.episode_id}: variable {name!r} has "
                        f"non-finite value {value!r}"
                    )
                if hour < prev:
                    raise ValueError(
                        f"episode {self.episode_id}: variable {name!r} hours "
                        "are not sorted ascending"
                    )
                prev = hour


def slice_windows(series) -> tuple[list[tuple[float, float]], ...]:
    """Split one variable's (hour, value) pairs into the 7 standard windows.

    Membership is by timestamp alone; an empty input yields 7 empty windows.
    """
    windows: tuple[list[tuple[float, float]], ...] = tuple([] for _ in WINDOW_NAMES)
    for hour, value in series:
        point = (hour, value)
        windows[0].append(point)
        for i, q in enumerate(_QUANTS):
            if hour < HORIZON_HOURS * q:
                windows[1 + i].append(point)
            if hour >= HORIZON_HOURS * (1.0 - q):
                windows[4 + i].append(point)
    return windows


def window_stats(values) -> tuple[float, float, float, float, float, float]:
    """(max, min, mean, std, skew, count) of a value sequence.

    Empty input gives all zeros (count included). std is the sample standard
    deviation (divisor n-1), 0 when n < 2. Skew is the moment-based
    Fisher-Pearson g1 = m3 / m2^1.5 with population central moments, 0 when
    n < 3 or the values are constant.
    """
    v = np.asarray(values, dtype=np.float64)
    n = v.size
    if n == 0:
        return (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    mean = float(np.mean(v))
    std = float(np.std(v, ddof=1)) if n >= 2 else 0.0
    skew = 0.0
    if n >= 3:
        dev = v - mean
        m2 = float(np.mean(dev**2))
        if m2 > 0.0:
            m3 = float(np.mean(dev**3))
            skew = m3 / m2**1.5
    return (float(np.max(v)), float(np.min(v)), mean, std, skew, float(n))


@dataclass(frozen=True)
class FeatureMatrix:
    """n extracted episodes: rows of width 42*V plus ids and labels."""

    rows: np.ndarray
    episode_ids: tuple[str, ...]
    labels: np.ndarray
    variables: tuple[str, ...]

    def __post_init__(self) -> None:
        n_vars = len(self.variables)
        if self.rows.ndim != 2 or self.rows.shape[1] != STATS_PER_VARIABLE * n_vars:
            raise ValueError(
                f"row width must be {STATS_PER_VARIABLE}*V = "
                f"{STATS_PER_VARIABLE * n_vars}, got {self.rows.shape}"
            )
        if len(self.episode_ids) != self.rows.shape[0] or self.labels.size != self.rows.shape[0]:
            raise ValueError("rows, episode_ids and labels disagree in length")
        if len(set(self.episode_ids)) != len(self.episode_ids):
            raise ValueError("episode ids are not unique")
        if not np.all(np.isfinite(self.rows)):
            raise ValueError("feature rows contain non-finite values")

    @property
    def n_variables(self) -> int:
        return len(self.variables)


def feature_names(variables) -> list[str]:
    """Column names in extraction order: variable-major, then window, then stat."""
    return [
        f"{var}__{win}__{stat}"
        for var in variables
        for win in WINDOW_NAMES
        for stat in STAT_NAMES
    ]


def extract(episodes, variables) -> FeatureMatrix:
    """Feature matrix over the given episodes and ordered variable list.

    A variable missing from an episode contributes the empty-window
    statistics (all zeros), so every row has width 42*V regardless of
    missingness.
    """
    variables = tuple(variables)
    if not variables:
        raise ValueError("variables list must be non-empty")
    episodes = list(episodes)
    width = STATS_PER_VARIABLE * len(variables)
    rows = np.zeros((len(episodes), width))
    for i, ep in enumerate(episodes):
        col = 0
        for var in variables:
            for window in slice_windows(ep.series.get(var, ())):
                rows[i, col : col + 6] = window_stats([value for _, value in window])
                col += 6
    return FeatureMatrix(
        rows=rows,
        episode_ids=tuple(ep.episode_id for ep in episodes),
        labels=np.array([ep.label for ep in episodes], dtype=np.int64),
        variables=variables,
    )


@dataclass(frozen=True)
class Scaler:
    """Per-feature (min, max) learned from training rows; maps into [-1, 1]."""

    mins: np.ndarray
    maxs: np.ndarray
    clip: bool = True

    def __post_init__(self) -> None:
        if self.mins.shape != self.maxs.shape or self.mins.ndim != 1:
            raise ValueError("mins and maxs must be 1-D and equal length")
        if np.any(self.maxs < self.mins):
            raise ValueError("scaler has max < min for some feature")


def fit_scaler(train_rows, clip: bool = True) -> Scaler:
    """Learn per-feature extremes from >= 1 training rows."""
    x = np.atleast_2d(np.asarray(train_rows, dtype=np.float64))
    if x.shape[0] < 1 or x.size == 0:
        raise ValueError("fit_scaler needs at least one row")
    return Scaler(mins=x.min(axis=0), maxs=x.max(axis=0), clip=clip)


def transform(scaler: Scaler, rows) -> np.ndarray:
    """x' = 2(x - min)/(max - min) - 1 per feature.

    Zero-range features map to 0; out-of-range values are clipped into
    [-1, 1] when the scaler says so. Training rows land in [-1, 1] exactly,
    attaining the endpoints at each feature's extremes.
    """
    x = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if x.shape[1] != scaler.mins.size:
        raise ValueError(
            f"row width mismatch: scaler has {scaler.mins.size} features, "
            f"rows have {x.shape[1]}"
        )
    span = scaler.maxs - scaler.mins
    nonzero = span > 0.0
    out = np.zeros_like(x)
    out[:, nonzero] = 2.0 * (x[:, nonzero] - scaler.mins[nonzero]) / span[nonzero] - 1.0
    if scaler.clip:
        np.clip(out, -1.0, 1.0, out=out)
    return out
