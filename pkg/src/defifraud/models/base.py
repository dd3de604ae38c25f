from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionMismatch, InputError, SingleClassTrainingSet, Unsupported

FAMILIES = ("logreg", "random_forest", "gbt", "svm_rbf", "mlp", "constant")
ALIASES = {"rf": "random_forest", "svm": "svm_rbf", "xgb": "gbt", "lr": "logreg", "ann": "mlp"}

# Tree ensembles see raw features, margin/gradient learners see z-scores.
NORMALIZE_BY_DEFAULT = {"logreg": True, "svm_rbf": True, "mlp": True,
                        "random_forest": False, "gbt": False, "constant": False}

DEFAULTS = {
    "logreg": {"l2": 1e-4, "max_iter": 1000, "tol": 1e-6},
    "random_forest": {"n_trees": 100, "max_depth": 16, "min_leaf": 1},
    "gbt": {"n_rounds": 200, "max_depth": 6, "eta": 0.1, "reg_lambda": 1.0, "gamma": 0.0,
            "min_child_weight": 1.0},
    "svm_rbf": {"C": 1.0, "gamma": None, "tol": 1e-3, "max_iter": 10_000_000, "cache_rows": 1024},
    "mlp": {"hidden": [40, 10, 5], "dropout": 0.3, "epochs": 30, "batch_size": 128,
            "lr": 1e-3, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
    "constant": {"label": 0},
}


def canonical_family(name: str) -> str:
    family = ALIASES.get(name, name)
    if family not in FAMILIES:
        raise InputError(f"unknown model family {name!r}")
    return family


@dataclass
class ModelSpec:
    family: str
    hyperparameters: dict = field(default_factory=dict)
    seed: int = 0
    normalize: bool | None = None

    def __post_init__(self):
        self.family = canonical_family(self.family)
        unknown = set(self.hyperparameters) - set(DEFAULTS[self.family])
        if unknown:
            raise InputError(f"unknown {self.family} hyperparameters: {sorted(unknown)}")
        self.hyperparameters = {**DEFAULTS[self.family], **self.hyperparameters}
        if self.normalize is None:
            self.normalize = NORMALIZE_BY_DEFAULT[self.family]

    def to_dict(self) -> dict:
        return {"family": self.family, "hyperparameters": self.hyperparameters,
                "seed": self.seed, "normalize": self.normalize}

    @classmethod
    def from_dict(cls, d: dict) -> ModelSpec:
        return cls(d["family"], dict(d["hyperparameters"]), d["seed"], d["normalize"])


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class Classifier:
    """Common surface: fit, predict_proba, feature_importance, array (de)serialization."""

    family = ""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.hp = spec.hyperparameters
        self.feature_count: int | None = None

    def fit(self, X: np.ndarray, y: np.ndarray) -> Classifier:
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise DimensionMismatch("X must be 2-D with one label per row")
        if not np.all(np.isfinite(X)):
            raise InputError("training matrix contains non-finite values")
        if len(np.unique(y)) < 2:
            raise SingleClassTrainingSet("training set needs both classes")
        self.feature_count = X.shape[1]
        self._fit(X, y.astype(np.int64))
        return self

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.feature_count:
            raise DimensionMismatch(f"expected {self.feature_count} features, got {X.shape[1]}")
        if not np.all(np.isfinite(X)):
            raise InputError("inputs must be finite")
        return X

    def predict_proba(self, X) -> np.ndarray:
        """Probability of the malicious class, one value per row."""
        return self._proba(self._check(X))

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.int64)

    def raw_importance(self) -> np.ndarray:
        raise Unsupported(f"{self.family} has no feature importance")

    def feature_importance(self) -> np.ndarray:
        imp = np.asarray(self.raw_importance(), dtype=float)
        total = imp.sum()
        if total <= 0:
            return np.full(imp.shape, 1.0 / imp.size)
        return imp / total

    def _fit(self, X, y):
        raise NotImplementedError

    def _proba(self, X):
        raise NotImplementedError

    def to_arrays(self) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        raise NotImplementedError


class ConstantClassifier(Classifier):
    """Baseline that always predicts one class."""

    family = "constant"

    def _fit(self, X, y):
        pass

    def _proba(self, X):
        return np.full(X.shape[0], float(self.hp["label"]))

    def to_arrays(self):
        return {}

    def load_arrays(self, arrays):
        pass
