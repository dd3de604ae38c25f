"""Command-line entry point: synth, featurize, eval, importance, report, predict.

Exit codes: 0 success, 2 bad input, 3 failed invariant.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .datamodel import build_histories, load_label_registry, read_events, write_events, write_label_registry
from .errors import InputError, InvariantError, SchemaMismatch, Unsupported
from .evaluation import FoldTransform, export_plot_data, load_report, recompute_metrics, run_cv, write_importance
from .featurize import (
    N_FEATURES,
    SCHEMA_VERSION,
    TRANSACTIONAL_NAMES,
    FeatureSchema,
    FeatureVector,
    derive_token_schema,
    extract_features,
    read_feature_matrix,
    write_feature_matrix,
)
from .models import ModelSpec, load_model, make_model, predict_proba, save_model
from .preprocess import SmoteConfig, ZScoreStats, assemble, boxplot_table, correlation_matrix, smote
from .synthgen import FraudProfile, SynthConfig, generate_corpus

log = logging.getLogger("defifraud")

MODEL_CHOICES = ["logreg", "rf", "gbt", "svm", "mlp", "constant"]


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_synth(args):
    profile = FraudProfile() if args.fraud_profile == "on" else FraudProfile.off()
    cfg = SynthConfig(seed=args.seed, n_good=args.good, n_malicious=args.malicious,
                      events_per_address=(args.min_events, args.max_events), fraud_profile=profile)
    events, registry = generate_corpus(cfg)
    write_events(args.out, events)
    write_label_registry(args.labels, registry)
    log.info("wrote %d events for %d addresses", len(events), len(registry))


def cmd_featurize(args):
    events, _ = read_events(args.events, skip_unknown=args.skip_unknown)
    if args.schema_in:
        schema = FeatureSchema.load(args.schema_in)
    else:
        schema = derive_token_schema(events)
    vectors = extract_features(build_histories(events), schema, n_jobs=args.jobs)
    if args.schema_out:
        schema.save(args.schema_out)
    write_feature_matrix(args.out, vectors, schema)
    log.info("featurized %d addresses into %d columns", len(vectors), N_FEATURES)


def _load_dataset(args):
    schema = FeatureSchema.load(args.schema) if args.schema else None
    addresses, matrix, names = read_feature_matrix(args.features, schema)
    if len(names) != N_FEATURES:
        raise SchemaMismatch(f"feature matrix has {len(names)} columns, expected {N_FEATURES}")
    version = schema.version if schema else SCHEMA_VERSION
    vectors = [FeatureVector(a, row, version) for a, row in zip(addresses, matrix)]
    registry = load_label_registry(args.labels)
    dataset = assemble(vectors, registry, args.good_sample, args.seed, names)
    if args.transactional_only:
        dataset = dataset.select_columns(range(len(TRANSACTIONAL_NAMES)))
    return dataset


def _spec(args) -> ModelSpec:
    hp = json.loads(args.hyperparameters) if args.hyperparameters else {}
    if not isinstance(hp, dict):
        raise InputError("--hyperparameters must be a JSON object")
    normalize = {"auto": None, "on": True, "off": False}[args.normalize]
    return ModelSpec(args.model, hp, seed=args.seed, normalize=normalize)


def cmd_eval(args):
    dataset = _load_dataset(args)
    spec = _spec(args)
    smote_cfg = SmoteConfig(args.smote_k, args.smote_ratio, args.seed)
    report = run_cv(dataset, spec, k=args.folds, seed=args.seed, smote=smote_cfg, n_jobs=args.jobs)
    report.save(args.report, include_runtime=args.record_runtime)
    avg = report.averages()
    for cls in ("good", "malicious"):
        m = avg[cls]
        print(f"{cls:9s} precision={m.precision:.4f} recall={m.recall:.4f} "
              f"accuracy={m.accuracy:.4f} f1={m.f1:.4f} f2={m.f2:.4f}")
    if args.model_out:
        transform = FoldTransform.fit(dataset.matrix, spec.normalize)
        X, y = smote(transform.apply(dataset.matrix), dataset.labels, smote_cfg)
        model = make_model(spec).fit(X, y)
        save_model(args.model_out, model, feature_names=dataset.feature_names,
                   preprocessing=transform.arrays(), schema_version=dataset.schema_version)


def cmd_importance(args):
    model, meta, prep = load_model(args.model_artifact, expected_schema_version=None)
    names = meta["feature_names"] or [f"f{j}" for j in range(model.feature_count)]
    kept = prep.get("kept", np.arange(model.feature_count))
    full = np.zeros(len(names))
    full[kept] = model.feature_importance()
    write_importance(args.out, names, full)


def cmd_predict(args):
    model, meta, prep = load_model(args.model_artifact)
    addresses, matrix, names = read_feature_matrix(args.features)
    if meta["feature_names"] is not None and names[:len(meta["feature_names"])] != meta["feature_names"]:
        raise SchemaMismatch("feature columns differ from the ones the model was trained on")
    transform = FoldTransform(prep["medians"], prep["kept"], None)
    if "z_mean" in prep:
        transform.zstats = ZScoreStats(prep["z_mean"], prep["z_std"])
    X = transform.apply(matrix[:, :len(prep["medians"])])
    proba = predict_proba(model, X)
    _write_csv(args.out, ["address", "p_malicious"], [[a, repr(float(p))] for a, p in zip(addresses, proba)])


def cmd_report(args):
    report = load_report(args.input)
    for i, (fold, rebuilt) in enumerate(zip(report["folds"], recompute_metrics(report))):
        for cls in ("good", "malicious"):
            stored = fold[f"metrics_{cls}"]
            if any(abs(stored[k] - rebuilt[cls][k]) > 1e-12 for k in stored):
                raise InvariantError(f"fold {i} {cls} metrics disagree with the stored confusion")
    written = export_plot_data(report, args.plots_out)
    if args.features and args.labels:
        args.schema, args.good_sample, args.transactional_only = None, 10**9, False
        args.seed = report["seed"]
        dataset = _load_dataset(args)
        out = Path(args.plots_out)
        varying = np.flatnonzero(np.nanstd(dataset.matrix, axis=0) > 0)
        corr = correlation_matrix(np.nan_to_num(dataset.matrix[:, varying]))
        names = [dataset.feature_names[j] for j in varying]
        _write_csv(out / "correlation.csv", ["feature_a", "feature_b", "pearson"],
                   [[names[a], names[b], repr(float(corr[a, b]))]
                    for a in range(len(names)) for b in range(len(names))])
        imp = report.get("importance")
        cols = list(range(len(TRANSACTIONAL_NAMES)))
        if imp is not None:
            cols = [int(j) for j in np.argsort(-np.asarray(imp), kind="stable")[:10]]
        rows = boxplot_table(np.nan_to_num(dataset.matrix), dataset.labels, dataset.feature_names, cols)
        header = list(rows[0]) if rows else []
        _write_csv(out / "boxplot.csv", header, [[r[h] for h in header] for r in rows])
        written += [out / "correlation.csv", out / "boxplot.csv"]
    for path in written:
        print(path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="defifraud", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labelled synthetic event corpus")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--good", type=int, default=5000)
    p.add_argument("--malicious", type=int, default=50)
    p.add_argument("--min-events", type=int, default=3)
    p.add_argument("--max-events", type=int, default=40)
    p.add_argument("--fraud-profile", choices=["on", "off"], default="on")
    p.add_argument("--out", required=True, help="events file (one JSON object per line)")
    p.add_argument("--labels", required=True, help="label registry CSV")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("featurize", help="events to a 422-column feature matrix")
    p.add_argument("--events", required=True)
    p.add_argument("--schema-out")
    p.add_argument("--schema-in", help="reuse a previously derived token schema")
    p.add_argument("--out", required=True)
    p.add_argument("--skip-unknown", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("eval", help="stratified k-fold cross-validation")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--schema")
    p.add_argument("--model", choices=MODEL_CHOICES, default="gbt")
    p.add_argument("--hyperparameters", help="JSON object overriding family defaults")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--smote-k", type=int, default=5)
    p.add_argument("--smote-ratio", type=float, default=1.0)
    p.add_argument("--normalize", choices=["auto", "on", "off"], default="auto")
    p.add_argument("--good-sample", type=int, default=10000)
    p.add_argument("--transactional-only", action="store_true")
    p.add_argument("--report", required=True)
    p.add_argument("--record-runtime", action="store_true",
                   help="store wall-clock seconds (makes the report run-dependent)")
    p.add_argument("--model-out", help="also fit on all rows and save the model artifact")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("importance", help="ranked feature importance of a saved model")
    p.add_argument("--model-artifact", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("predict", help="score a feature matrix with a saved model")
    p.add_argument("--model-artifact", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("report", help="validate a report and export tidy plot data")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--plots-out", required=True)
    p.add_argument("--features", help="feature matrix for correlation and box-plot tables")
    p.add_argument("--labels")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except InvariantError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (InputError, Unsupported, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
