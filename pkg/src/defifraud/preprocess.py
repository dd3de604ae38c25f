"""Dataset assembly, cleaning, normalization, correlation and SMOTE.

The column transforms come in fit/apply pairs: called without fitted
statistics they compute them from the input, called with statistics they
only apply them. Cross-validation relies on this to fit on training rows
and apply to held-out rows.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .datamodel import LabelRegistry, normalize_address
from .errors import AllColumnsDropped, InvalidConfig, MinorityTooSmall, NoMaliciousRows, TooFewRows
from .featurize import SCHEMA_VERSION, FeatureVector

log = logging.getLogger(__name__)


def make_rng(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


@dataclass
class Dataset:
    matrix: np.ndarray
    labels: np.ndarray
    addresses: list[str]
    feature_names: list[str]
    schema_version: str = SCHEMA_VERSION

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = self.matrix.shape[0]
        if len(self.labels) != n or len(self.addresses) != n:
            raise ValueError("matrix, labels and addresses must have equal row counts")
        if self.matrix.shape[1] != len(self.feature_names):
            raise ValueError("feature_names must match matrix width")

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def take(self, rows) -> Dataset:
        rows = np.asarray(rows)
        return replace(self, matrix=self.matrix[rows], labels=self.labels[rows],
                       addresses=[self.addresses[i] for i in rows])

    def select_columns(self, cols) -> Dataset:
        cols = np.asarray(cols)
        return replace(self, matrix=self.matrix[:, cols],
                       feature_names=[self.feature_names[j] for j in cols])

    def class_counts(self) -> tuple[int, int]:
        n_bad = int(self.labels.sum())
        return len(self) - n_bad, n_bad


def assemble(features: Sequence[FeatureVector], registry: LabelRegistry, n_good_sample: int,
             seed: int, feature_names: Sequence[str]) -> Dataset:
    """Keep every malicious address with features plus a seeded uniform sample of good ones."""
    row_of = {normalize_address(fv.address): i for i, fv in enumerate(features)}
    missing = [a for a in registry.entries if a not in row_of]
    if missing:
        log.warning("%d labelled addresses have no features and are dropped", len(missing))
    bad_rows, good_rows = [], []
    for address, (label, _) in registry.entries.items():
        if address in row_of:
            (bad_rows if label == "malicious" else good_rows).append(row_of[address])
    if not bad_rows:
        raise NoMaliciousRows("no malicious address has features")
    good_rows.sort()
    n_take = min(n_good_sample, len(good_rows))
    picked = make_rng(seed).choice(len(good_rows), size=n_take, replace=False)
    rows = sorted(bad_rows + [good_rows[i] for i in picked])
    bad = set(bad_rows)
    return Dataset(
        matrix=np.vstack([features[i].values for i in rows]) if rows else np.zeros((0, len(feature_names))),
        labels=np.array([1 if i in bad else 0 for i in rows]),
        addresses=[features[i].address for i in rows],
        feature_names=list(feature_names),
        schema_version=features[rows[0]].schema_version,
    )


def _matrix(data):
    return data.matrix if isinstance(data, Dataset) else np.asarray(data, dtype=float)


def _rewrap(data, matrix, names=None):
    if isinstance(data, Dataset):
        return replace(data, matrix=matrix, feature_names=names if names is not None else data.feature_names)
    return matrix


def impute_median(data, medians: np.ndarray | None = None):
    """Replace NaNs by column medians (all-NaN column -> 0). Returns (data, medians)."""
    X = _matrix(data)
    if medians is None:
        medians = np.zeros(X.shape[1])
        for j in range(X.shape[1]):
            col = X[:, j]
            col = col[~np.isnan(col)]
            medians[j] = np.median(col) if col.size else 0.0
    out = np.where(np.isnan(X), medians[None, :], X)
    return _rewrap(data, out), medians


def drop_zero_variance(data, kept: np.ndarray | None = None):
    """Drop constant columns. Returns (data, kept) with kept[new] = old column index."""
    X = _matrix(data)
    if kept is None:
        if X.shape[0] == 0:
            kept = np.arange(X.shape[1])
        else:
            kept = np.flatnonzero(np.any(X != X[0], axis=0))
        if kept.size == 0:
            raise AllColumnsDropped("every column has zero variance")
    names = [data.feature_names[j] for j in kept] if isinstance(data, Dataset) else None
    return _rewrap(data, X[:, kept], names), kept


@dataclass
class ZScoreStats:
    mean: np.ndarray
    std: np.ndarray


def zscore(data, stats: ZScoreStats | None = None):
    X = _matrix(data)
    if stats is None:
        mean = X.mean(axis=0)
        std = np.sqrt(((X - mean) ** 2).mean(axis=0))
        std[np.all(X == X[:1], axis=0)] = 0.0
        stats = ZScoreStats(mean, std)
    safe = np.where(stats.std > 0, stats.std, 1.0)
    out = np.where(stats.std > 0, (X - stats.mean) / safe, 0.0)
    return _rewrap(data, out), stats


def correlation_matrix(data) -> np.ndarray:
    """Pearson correlations; pairs with a constant column are 0, the diagonal is 1."""
    X = _matrix(data)
    if X.shape[0] < 2:
        raise TooFewRows("correlation needs at least two rows")
    Z = X - X.mean(axis=0)
    norms = np.sqrt((Z ** 2).sum(axis=0))
    constant = np.all(X == X[:1], axis=0)
    norms[constant] = 1.0
    Z[:, constant] = 0.0
    Z /= norms
    C = Z.T @ Z
    C = np.clip(0.5 * (C + C.T), -1.0, 1.0)
    np.fill_diagonal(C, 1.0)
    return C


@dataclass(frozen=True)
class SmoteConfig:
    k_neighbors: int = 5
    target_ratio: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise InvalidConfig("k_neighbors must be >= 1")
        if not 0 < self.target_ratio <= 1:
            raise InvalidConfig("target_ratio must lie in (0, 1]")


@dataclass
class SmoteTrace:
    minority_label: int
    n_minority: int
    n_majority: int
    n_synthetic: int
    k_effective: int
    base: np.ndarray = field(repr=False)
    neighbor: np.ndarray = field(repr=False)
    delta: np.ndarray = field(repr=False)


def minority_neighbors(points: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest other points (Euclidean, ties by index)."""
    nn = np.empty((len(points), k), dtype=np.int64)
    for i, p in enumerate(points):
        d2 = ((points - p) ** 2).sum(axis=1)
        d2[i] = np.inf
        nn[i] = np.argsort(d2, kind="stable")[:k]
    return nn


def smote_with_trace(X: np.ndarray, y: np.ndarray, config: SmoteConfig):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    n_pos = int((y == 1).sum())
    n_neg = len(y) - n_pos
    minority_label = 1 if n_pos <= n_neg else 0
    minority = np.flatnonzero(y == minority_label)
    m = minority.size
    n_major = len(y) - m
    if m < 2:
        raise MinorityTooSmall(f"SMOTE needs at least 2 minority rows, got {m}")
    k = min(config.k_neighbors, m - 1)
    n_syn = max(int(np.floor(config.target_ratio * n_major)) - m, 0)

    P = X[minority]
    nn = minority_neighbors(P, k)
    rng = make_rng(config.seed)
    base = rng.integers(0, m, size=n_syn)
    pick = rng.integers(0, k, size=n_syn)
    delta = rng.random(n_syn)
    neighbor = nn[base, pick]
    synthetic = P[base] + delta[:, None] * (P[neighbor] - P[base])

    X_out = np.vstack([X, synthetic])
    y_out = np.concatenate([y, np.full(n_syn, minority_label, dtype=y.dtype)])
    trace = SmoteTrace(minority_label, m, n_major, n_syn, k, minority[base], minority[neighbor], delta)
    return X_out, y_out, trace


def smote(X: np.ndarray, y: np.ndarray, config: SmoteConfig) -> tuple[np.ndarray, np.ndarray]:
    """Append synthetic minority rows until minority/majority reaches the target ratio."""
    X_out, y_out, _ = smote_with_trace(X, y, config)
    return X_out, y_out


def boxplot_table(X: np.ndarray, y: np.ndarray, names: Sequence[str], columns: Sequence[int]) -> list[dict]:
    """Per-class box-plot statistics (Tukey whiskers) for selected columns."""
    rows = []
    for j in columns:
        for label, cls in ((0, "good"), (1, "malicious")):
            v = X[y == label, j]
            if v.size == 0:
                continue
            q1, med, q3 = np.percentile(v, [25, 50, 75])
            iqr = q3 - q1
            inside = v[(v >= q1 - 1.5 * iqr) & (v <= q3 + 1.5 * iqr)]
            rows.append({
                "feature": names[j], "class": cls, "n": int(v.size),
                "min": float(v.min()), "whisker_lo": float(inside.min()), "q1": float(q1),
                "median": float(med), "q3": float(q3), "whisker_hi": float(inside.max()),
                "max": float(v.max()),
                "n_outliers": int(v.size - inside.size),
            })
    return rows
