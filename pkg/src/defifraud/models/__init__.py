"""Five classifier families behind one train / predict_proba / importance surface."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import SchemaMismatch
from ..featurize import SCHEMA_VERSION
from .base import DEFAULTS, FAMILIES, Classifier, ConstantClassifier, ModelSpec, canonical_family
from .linear import LogisticRegression
from .mlp import MLP
from .svm import RbfSVM
from .trees import GradientBoostedTrees, RandomForest

ARTIFACT_FORMAT = "defifraud-model/1"

CLASSES = {
    "logreg": LogisticRegression,
    "random_forest": RandomForest,
    "gbt": GradientBoostedTrees,
    "svm_rbf": RbfSVM,
    "mlp": MLP,
    "constant": ConstantClassifier,
}


def make_model(spec: ModelSpec) -> Classifier:
    return CLASSES[spec.family](spec)


def train(spec: ModelSpec, matrix, labels) -> Classifier:
    return make_model(spec).fit(matrix, labels)


def predict_proba(model: Classifier, x) -> np.ndarray | float:
    """Scalar for a single vector, array for a matrix."""
    x = np.asarray(x, dtype=float)
    out = model.predict_proba(x)
    return float(out[0]) if x.ndim == 1 else out


def feature_importance(model: Classifier) -> np.ndarray:
    return model.feature_importance()


def save_model(path: str | Path, model: Classifier, *, feature_names=None, preprocessing=None,
               schema_version: str = SCHEMA_VERSION, sidecar: str | None = None) -> None:
    """Write an .npz container: parameter arrays plus a JSON header under ``__meta__``.

    ``preprocessing`` maps names to arrays (medians, kept columns, z-score stats)
    and is stored alongside the parameters with a ``prep_`` prefix.
    """
    meta = {
        "format": ARTIFACT_FORMAT,
        "schema_version": schema_version,
        "spec": model.spec.to_dict(),
        "feature_count": model.feature_count,
        "feature_names": list(feature_names) if feature_names is not None else None,
        "preprocessing_sidecar": sidecar,
    }
    arrays = {f"param_{k}": v for k, v in model.to_arrays().items()}
    for k, v in (preprocessing or {}).items():
        arrays[f"prep_{k}"] = np.asarray(v)
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_model(path: str | Path, expected_schema_version: str | None = SCHEMA_VERSION):
    """Returns (model, meta, preprocessing arrays)."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format") != ARTIFACT_FORMAT:
            raise SchemaMismatch(f"not a model artifact: format {meta.get('format')!r}")
        if expected_schema_version is not None and meta["schema_version"] != expected_schema_version:
            raise SchemaMismatch(
                f"artifact schema {meta['schema_version']!r} != expected {expected_schema_version!r}")
        params, prep = {}, {}
        for k in data.files:
            if k.startswith("param_"):
                params[k[len("param_"):]] = data[k]
            elif k.startswith("prep_"):
                prep[k[len("prep_"):]] = data[k]
    model = make_model(ModelSpec.from_dict(meta["spec"]))
    model.feature_count = meta["feature_count"]
    model.load_arrays(params)
    return model, meta, prep


__all__ = [
    "DEFAULTS", "FAMILIES", "Classifier", "ModelSpec", "canonical_family", "make_model", "train",
    "predict_proba", "feature_importance", "save_model", "load_model",
]
