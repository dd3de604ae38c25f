"""Cross-validate every classifier family on one synthetic corpus and print a table.

    python3 scripts/compare_families.py --good 2000 --malicious 40
"""
import argparse

from defifraud.datamodel import build_histories
from defifraud.evaluation import run_cv
from defifraud.featurize import derive_token_schema, extract_features
from defifraud.models import ModelSpec
from defifraud.preprocess import SmoteConfig, assemble
from defifraud.synthgen import SynthConfig, generate_corpus

FAMILIES = ("constant", "logreg", "rf", "gbt", "svm", "mlp")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--good", type=int, default=2000)
    ap.add_argument("--malicious", type=int, default=40)
    ap.add_argument("--folds", type=int, default=5)
    ap.add_argument("--families", nargs="+", default=list(FAMILIES))
    args = ap.parse_args()

    events, registry = generate_corpus(SynthConfig(args.seed, args.good, args.malicious))
    schema = derive_token_schema(events)
    data = assemble(extract_features(build_histories(events), schema), registry, 10_000, args.seed, schema.names)

    print(f"{'model':10s} {'class':9s} {'prec':>6s} {'recall':>6s} {'f1':>6s} {'f2':>6s} {'acc':>6s} {'sec':>6s}")
    for family in args.families:
        report = run_cv(data, ModelSpec(family, seed=args.seed), k=args.folds, seed=args.seed,
                        smote=SmoteConfig(5, 1.0, args.seed))
        for cls, m in report.averages().items():
            print(f"{family:10s} {cls:9s} {m.precision:6.3f} {m.recall:6.3f} {m.f1:6.3f} {m.f2:6.3f} "
                  f"{m.accuracy:6.3f} {report.runtime_seconds:6.1f}")


if __name__ == "__main__":
    main()
