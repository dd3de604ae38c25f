"""Stratified k-fold cross-validation with per-fold preprocessing and provenance.

Each fold fits median imputation, the zero-variance filter, optional
z-scoring and SMOTE on its training rows only, applies the fitted
transforms (never SMOTE) to the held-out rows, trains, and scores both
classes. Every fitted statistic records a digest of the row indices it was
fitted on, which is how leakage is audited.
"""
from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ClassTooSmall
from .metrics import METRIC_NAMES, Confusion, Metrics, compute_metrics, mean_metrics
from .models import ModelSpec, make_model
from .preprocess import (
    Dataset,
    SmoteConfig,
    drop_zero_variance,
    impute_median,
    make_rng,
    smote_with_trace,
    zscore,
)

REPORT_FORMAT = "defifraud-cv/1"


def stratified_folds(labels, k: int, seed: int) -> list[np.ndarray]:
    """Partition indices into k folds; each class is dealt round-robin after a seeded shuffle."""
    labels = np.asarray(labels)
    if k < 2:
        raise ClassTooSmall("need at least 2 folds")
    folds: list[list[int]] = [[] for _ in range(k)]
    rng = make_rng(seed, 0xF01D)
    offset = 0
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if members.size < k:
            raise ClassTooSmall(f"class {cls} has {members.size} rows, fewer than {k} folds")
        members = members[rng.permutation(members.size)]
        for j, idx in enumerate(members):
            folds[(j + offset) % k].append(int(idx))
        offset = (offset + members.size) % k
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


def row_digest(rows) -> str:
    rows = np.sort(np.asarray(rows, dtype=np.int64))
    return hashlib.sha256(rows.tobytes()).hexdigest()[:16]


def param_digest(model) -> str:
    h = hashlib.sha256()
    for name, arr in sorted(model.to_arrays().items()):
        h.update(name.encode())
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()[:16]


@dataclass
class FoldTransform:
    """Preprocessing fitted on one fold's training rows."""
    medians: np.ndarray
    kept: np.ndarray
    zstats: object | None

    @classmethod
    def fit(cls, X: np.ndarray, normalize: bool) -> FoldTransform:
        Xi, medians = impute_median(X)
        Xk, kept = drop_zero_variance(Xi)
        zstats = zscore(Xk)[1] if normalize else None
        return cls(medians, kept, zstats)

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = impute_median(X, self.medians)[0]
        X = drop_zero_variance(X, self.kept)[0]
        if self.zstats is not None:
            X = zscore(X, self.zstats)[0]
        return X

    def arrays(self) -> dict[str, np.ndarray]:
        out = {"medians": self.medians, "kept": self.kept}
        if self.zstats is not None:
            out["z_mean"] = self.zstats.mean
            out["z_std"] = self.zstats.std
        return out


def _floats(a) -> list[float]:
    return [float(x) for x in np.asarray(a)]


@dataclass
class FoldResult:
    index: int
    confusion_malicious: Confusion
    provenance: dict
    importance: np.ndarray | None

    @property
    def confusion_good(self) -> Confusion:
        return self.confusion_malicious.swapped()

    @property
    def metrics_malicious(self) -> Metrics:
        return compute_metrics(self.confusion_malicious)

    @property
    def metrics_good(self) -> Metrics:
        return compute_metrics(self.confusion_good)


def fit_fold_model(X_train, y_train, spec: ModelSpec, smote_cfg: SmoteConfig):
    """Fit preprocessing, oversample, train. Returns (transform, model, smote trace)."""
    transform = FoldTransform.fit(X_train, spec.normalize)
    Xt = transform.apply(X_train)
    Xs, ys, trace = smote_with_trace(Xt, y_train, smote_cfg)
    model = make_model(spec).fit(Xs, ys)
    return transform, model, trace


def _run_fold(args) -> FoldResult:
    i, X, y, train_idx, test_idx, spec, smote_cfg = args
    train_digest = row_digest(train_idx)
    transform, model, trace = fit_fold_model(X[train_idx], y[train_idx], spec, smote_cfg)
    proba = model.predict_proba(transform.apply(X[test_idx]))
    pred = (proba >= 0.5).astype(np.int64)
    confusion = Confusion.from_predictions(y[test_idx], pred, positive=1)

    n_features = X.shape[1]
    importance = None
    try:
        imp = np.zeros(n_features)
        imp[transform.kept] = model.feature_importance()
        importance = imp
    except TypeError:
        pass

    dropped = sorted(set(range(n_features)) - set(int(j) for j in transform.kept))
    provenance = {
        "fold": i,
        "train_rows": int(len(train_idx)),
        "test_rows": int(len(test_idx)),
        "train_digest": train_digest,
        "test_digest": row_digest(test_idx),
        "imputation": {"fit_digest": train_digest, "medians": _floats(transform.medians)},
        "variance_filter": {"fit_digest": train_digest, "dropped": dropped},
        "normalization": None if transform.zstats is None else {
            "fit_digest": train_digest,
            "mean": _floats(transform.zstats.mean),
            "std": _floats(transform.zstats.std),
        },
        "smote": {
            "fit_digest": train_digest,
            "seed": smote_cfg.seed,
            "k_effective": trace.k_effective,
            "n_minority": trace.n_minority,
            "n_majority": trace.n_majority,
            "n_synthetic": trace.n_synthetic,
        },
        "model": {
            "fit_digest": train_digest,
            "seed": spec.seed,
            "train_matrix_rows": int(len(train_idx) + trace.n_synthetic),
            "param_digest": param_digest(model),
        },
    }
    return FoldResult(i, confusion, provenance, importance)


@dataclass
class CVReport:
    spec: ModelSpec
    seed: int
    smote: SmoteConfig
    feature_names: list[str]
    folds: list[FoldResult]
    runtime_seconds: float | None = None
    extra: dict = field(default_factory=dict)

    def averages(self) -> dict[str, Metrics]:
        return {
            "good": mean_metrics([f.metrics_good for f in self.folds]),
            "malicious": mean_metrics([f.metrics_malicious for f in self.folds]),
        }

    def importance(self) -> np.ndarray | None:
        if any(f.importance is None for f in self.folds):
            return None
        imp = np.mean([f.importance for f in self.folds], axis=0)
        return imp / imp.sum() if imp.sum() > 0 else imp

    def to_dict(self, include_runtime: bool = False) -> dict:
        imp = self.importance()
        return {
            "format": REPORT_FORMAT,
            "spec": self.spec.to_dict(),
            "seed": self.seed,
            "smote": {"k_neighbors": self.smote.k_neighbors, "target_ratio": self.smote.target_ratio},
            "feature_names": list(self.feature_names),
            "folds": [{
                "confusion_good": f.confusion_good.to_dict(),
                "confusion_malicious": f.confusion_malicious.to_dict(),
                "metrics_good": f.metrics_good.to_dict(),
                "metrics_malicious": f.metrics_malicious.to_dict(),
            } for f in self.folds],
            "averages": {cls: m.to_dict() for cls, m in self.averages().items()},
            "importance": None if imp is None else _floats(imp),
            "provenance": [f.provenance for f in self.folds],
            "runtime_seconds": self.runtime_seconds if include_runtime else None,
            **self.extra,
        }

    def to_json(self, include_runtime: bool = False) -> str:
        return json.dumps(self.to_dict(include_runtime), indent=1, sort_keys=False) + "\n"

    def save(self, path: str | Path, include_runtime: bool = False) -> None:
        Path(path).write_text(self.to_json(include_runtime), encoding="utf-8")


def run_cv(dataset: Dataset, spec: ModelSpec, k: int = 5, seed: int = 0,
           smote: SmoteConfig | None = None, n_jobs: int = 1) -> CVReport:
    smote = smote or SmoteConfig()
    started = time.perf_counter()
    folds = stratified_folds(dataset.labels, k, seed)
    X, y = dataset.matrix, dataset.labels
    jobs = []
    for i, test_idx in enumerate(folds):
        train_idx = np.concatenate([f for j, f in enumerate(folds) if j != i])
        train_idx.sort()
        fold_spec = ModelSpec(spec.family, dict(spec.hyperparameters), seed=int(seed * 1000 + i),
                              normalize=spec.normalize)
        fold_smote = SmoteConfig(smote.k_neighbors, smote.target_ratio, seed=int(seed * 1000 + i))
        jobs.append((i, X, y, train_idx, test_idx, fold_spec, fold_smote))
    if n_jobs > 1:
        with ProcessPoolExecutor(n_jobs) as pool:
            results = list(pool.map(_run_fold, jobs))
    else:
        results = [_run_fold(job) for job in jobs]
    results.sort(key=lambda r: r.index)
    return CVReport(spec, seed, smote, list(dataset.feature_names), results,
                    runtime_seconds=time.perf_counter() - started)


def load_report(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def recompute_metrics(report: dict) -> list[dict]:
    """Metrics rebuilt from the stored confusions, fold by fold."""
    out = []
    for fold in report["folds"]:
        out.append({
            "good": compute_metrics(Confusion.from_dict(fold["confusion_good"])).to_dict(),
            "malicious": compute_metrics(Confusion.from_dict(fold["confusion_malicious"])).to_dict(),
        })
    return out


def export_plot_data(report: dict, out_dir: str | Path, model_name: str | None = None) -> list[Path]:
    """Tidy CSVs for the per-class metric bars and the importance ranking."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model_name = model_name or report["spec"]["family"]
    written = []
    path = out_dir / "metrics.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "class", "model", "fold", "value"])
        for i, fold in enumerate(report["folds"]):
            for cls in ("good", "malicious"):
                for name in METRIC_NAMES:
                    w.writerow([name, cls, model_name, i, repr(fold[f"metrics_{cls}"][name])])
        for cls in ("good", "malicious"):
            for name in METRIC_NAMES:
                w.writerow([name, cls, model_name, "mean", repr(report["averages"][cls][name])])
    written.append(path)
    if report.get("importance") is not None:
        path = out_dir / "importance.csv"
        write_importance(path, report["feature_names"], report["importance"])
        written.append(path)
    return written


def write_importance(path: str | Path, names, importance) -> None:
    ranked = sorted(zip(names, importance), key=lambda kv: (-kv[1], kv[0]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "feature", "importance"])
        for r, (name, value) in enumerate(ranked, 1):
            w.writerow([r, name, repr(float(value))])
