"""Command-line entry point: ``acrosense <subcommand> [--flags]``.

Exit codes: 0 success, 1 validation error (bad flags, schema violations),
2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .data import CHANNELS, filter_rare_labels, load_corpus, make_split, write_corpus
from .errors import NumericalError, ValidationError
from .evaluation import (
    accuracy, confusion_matrix, cross_validate, learning_curve, make_plan, normalize_scheme,
    permutation_importance,
)
from .gpc import TrainedModel, fit
from .kernels import parse_kernel
from .pipeline import RunConfig, featurize, kernel_summary, run_pipeline, split_features, write_pipeline_outputs
from .preprocess import FeatureMatrix
from .report import EvalReport, dumps, plot_importance, plot_learning_curves, plot_projection
from .synthgen import SynthConfig, generate
from .unsupervised import explore

logger = logging.getLogger("acrosense")

SUBCOMMANDS = ("synth", "preprocess", "spectra", "explore", "train", "evaluate",
               "learning-curve", "importance", "pipeline")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _channels(text):
    names = [c.strip().lower() for c in text.split(",") if c.strip()]
    if names == ["all"]:
        return CHANNELS
    return tuple(names)


def _sizes(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"sizes must be comma-separated integers, got {text!r}") from None


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(payload), encoding="utf-8")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="acrosense", description="IMU tumbling-element classification pipeline.")
    p.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic corpus (manifest + CSVs)")
    s.add_argument("--config", help="JSON file with synthetic generator settings")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    def corpus_flags(sp):
        sp.add_argument("--manifest", required=True)
        sp.add_argument("--channels", type=_channels, default=CHANNELS)
        sp.add_argument("--min-count", type=int, default=10)
        sp.add_argument("--holdout-athletes", type=int, default=4)
        sp.add_argument("--target-holdout", type=int, default=254)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--csv", action="store_true", help="also export CSV copies of the features")
        sp.add_argument("--out", required=True)

    s = sub.add_parser("preprocess", help="raw fixed-length features (train/holdout containers)")
    corpus_flags(s)
    s.add_argument("--mode", choices=("pad", "interpolate"), default="interpolate")
    s.add_argument("--len", type=int, default=898, dest="length")

    s = sub.add_parser("spectra", help="power-spectrum features (train/holdout containers)")
    corpus_flags(s)
    s.add_argument("--bins", type=int, default=1000)

    s = sub.add_parser("explore", help="PCA + k-means + ARI on a feature container")
    s.add_argument("--features", required=True)
    s.add_argument("--q", type=int, default=4)
    s.add_argument("--k", type=int, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    s = sub.add_parser("train", help="fit a GPC model with a fixed kernel")
    s.add_argument("--features", required=True)
    s.add_argument("--kernel", required=True)
    s.add_argument("--optimize-lml", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    s = sub.add_parser("evaluate", help="score a model on holdout features")
    s.add_argument("--model", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--train", help="training features; enables cross-validation of the model's kernel")
    s.add_argument("--cv", default="sgkf")
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    s = sub.add_parser("learning-curve", help="holdout accuracy against training-set size")
    s.add_argument("--train", required=True)
    s.add_argument("--holdout", required=True)
    s.add_argument("--kernel", required=True)
    s.add_argument("--cv", default="sgkf")
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--sizes", type=_sizes, default=(100, 200, 400, 600))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    s = sub.add_parser("importance", help="per-channel permutation importance")
    s.add_argument("--model", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--repeats", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    s = sub.add_parser("pipeline", help="filter, split, featurize, search, refit, evaluate")
    s.add_argument("--manifest", help="corpus manifest; a synthetic corpus is generated when omitted")
    s.add_argument("--synth-config", help="JSON synthetic generator settings (without --manifest)")
    s.add_argument("--data", choices=("spectra", "raw"), default="spectra")
    s.add_argument("--mode", choices=("pad", "interpolate"), default="interpolate")
    s.add_argument("--len", type=int, default=898, dest="length")
    s.add_argument("--bins", type=int, default=1000)
    s.add_argument("--channels", type=_channels, default=CHANNELS)
    s.add_argument("--min-count", type=int, default=10)
    s.add_argument("--holdout-athletes", type=int, default=4)
    s.add_argument("--target-holdout", type=int, default=254)
    s.add_argument("--cv", default="sgkf")
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--search-iters", type=int, default=10)
    s.add_argument("--family", default="C*RQ")
    s.add_argument("--kernel", help="fixed kernel expression; skips the randomized search")
    s.add_argument("--optimize-lml", action="store_true")
    s.add_argument("--sizes", type=_sizes, default=(100, 200, 400, 600))
    s.add_argument("--repeats", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    return p


# -- subcommand handlers --------------------------------------------------------------


def cmd_synth(args):
    cfg = SynthConfig.from_json(args.config) if args.config else SynthConfig()
    cfg = SynthConfig.from_dict(dict(cfg.to_dict(), seed=args.seed))
    corpus = generate(cfg)
    out = Path(args.out)
    write_corpus(corpus, out)
    _write_json(out / "synth_config.json", cfg.to_dict())
    print(f"wrote {len(corpus)} recordings, {len(corpus.athlete_set)} athletes, "
          f"{len(corpus.label_set)} labels to {out / 'manifest.json'}")


def _features_command(args, data):
    cfg = RunConfig(manifest=args.manifest, data=data, channels=args.channels, min_count=args.min_count,
                    holdout_athletes=args.holdout_athletes, target_holdout=args.target_holdout, seed=args.seed)
    if data == "raw":
        cfg.mode, cfg.target_length = args.mode, args.length
    else:
        cfg.bins = args.bins
    corpus = filter_rare_labels(load_corpus(args.manifest), args.min_count)
    split = make_split(corpus, args.holdout_athletes, args.target_holdout, args.seed)
    train, holdout = split_features(featurize(corpus, cfg, split.train_ids), split)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train.save(out / "train.acf")
    holdout.save(out / "holdout.acf")
    if args.csv:
        train.to_csv(out / "train.csv")
        holdout.to_csv(out / "holdout.csv")
    _write_json(out / "split.json", dict(split.to_dict(), config=cfg.resolved()))
    print(f"train {train.shape}, holdout {holdout.shape} -> {out}")


def cmd_explore(args):
    features = FeatureMatrix.load(args.features)
    pca, projected, report = explore(features, args.q, args.k, args.seed)
    out = Path(args.out)
    payload = {
        "ratios": pca.explained_variance_ratio.tolist(),
        "ari": report.ari,
        "inertia": report.inertia,
        "assignments": report.assignments.tolist(),
        "config": {"features": str(args.features), "q": args.q, "k": args.k, "seed": args.seed},
    }
    _write_json(out / "explore.json", payload)
    plot_projection(out / "explore.svg", projected, report.assignments, pca.explained_variance_ratio)
    print(f"ARI {report.ari:.4f}, inertia {report.inertia:.4g}")


def cmd_train(args):
    features = FeatureMatrix.load(args.features)
    kernel = parse_kernel(args.kernel)
    model = fit(features, kernel, optimize_lml=args.optimize_lml, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / "model.acm")
    summary = kernel_summary(model.kernel)
    payload = {
        "kernel": summary,
        "initial_kernel": kernel_summary(kernel),
        "label_order": list(model.label_order),
        "log_marginal_likelihood": model.log_marginal_likelihood,
        "n_train": int(model.X_train.shape[0]),
        "config": {"features": str(args.features), "kernel": args.kernel,
                   "optimize_lml": args.optimize_lml, "seed": args.seed},
    }
    _write_json(out / "train.json", payload)
    print(f"kernel {summary['expression']}")


def cmd_evaluate(args):
    model = TrainedModel.load(args.model)
    holdout = FeatureMatrix.load(args.features)
    pred = model.predict(holdout)
    acc = accuracy(holdout.labels, pred)
    cm = confusion_matrix(holdout.labels, pred, model.label_order)
    cv_mean = cv_std = None
    scheme = normalize_scheme(args.cv)
    if args.train:
        train = FeatureMatrix.load(args.train)
        res = cross_validate(train, model.kernel, make_plan(scheme, train, args.folds, args.seed))
        cv_mean, cv_std = res.mean, res.std
    report = EvalReport(
        scheme=scheme, kernel=kernel_summary(model.kernel), cv_accuracy_mean=cv_mean, cv_accuracy_std=cv_std,
        holdout_accuracy=acc, label_order=list(model.label_order), confusion_matrix=cm.tolist(),
        seeds={"cv": args.seed},
        config={"model": str(args.model), "features": str(args.features), "train": args.train,
                "cv": scheme, "folds": args.folds, "seed": args.seed},
    )
    report.write(args.out)
    print(f"holdout accuracy {acc:.4f}")


def cmd_learning_curve(args):
    train = FeatureMatrix.load(args.train)
    holdout = FeatureMatrix.load(args.holdout)
    scheme = normalize_scheme(args.cv)
    points = learning_curve(train, holdout, parse_kernel(args.kernel), args.sizes, scheme, args.seed, args.folds)
    rows = [asdict(p) for p in points]
    out = Path(args.out)
    _write_json(out / "learning_curve.json", {
        "scheme": scheme, "points": rows,
        "config": {"train": args.train, "holdout": args.holdout, "kernel": args.kernel, "cv": scheme,
                   "folds": args.folds, "sizes": list(args.sizes), "seed": args.seed},
    })
    plot_learning_curves(out / "learning_curve.svg", {scheme: rows})
    for p in points:
        print(f"{p.train_size:5d}  {p.mean_accuracy:.4f} +- {p.std_accuracy:.4f}{'  (degenerate)' if p.degenerate else ''}")


def cmd_importance(args):
    model = TrainedModel.load(args.model)
    holdout = FeatureMatrix.load(args.features)
    baseline, chans = permutation_importance(model, holdout, args.repeats, args.seed)
    rows = [{"channel": c.channel, "mean_drop": c.mean_drop, "std_drop": c.std_drop, "drops": list(c.drops)}
            for c in chans]
    out = Path(args.out)
    _write_json(out / "importance.json", {
        "baseline_accuracy": baseline, "importance": rows,
        "config": {"model": args.model, "features": args.features, "repeats": args.repeats, "seed": args.seed},
    })
    plot_importance(out / "importance.svg", rows)
    for r in rows:
        print(f"{r['channel']:6s} {r['mean_drop']:+.4f} +- {r['std_drop']:.4f}")


def cmd_pipeline(args):
    synth = {}
    if args.synth_config:
        if args.manifest:
            raise ValidationError("--synth-config cannot be combined with --manifest")
        synth = SynthConfig.from_json(args.synth_config).to_dict()
        synth["seed"] = args.seed
    cfg = RunConfig(
        manifest=args.manifest, synth=synth, data=args.data, mode=args.mode, target_length=args.length,
        bins=args.bins, channels=args.channels, min_count=args.min_count,
        holdout_athletes=args.holdout_athletes, target_holdout=args.target_holdout, cv=args.cv,
        folds=args.folds, search_iters=args.search_iters, family=args.family, kernel=args.kernel,
        optimize_lml=args.optimize_lml, sizes=args.sizes, repeats=args.repeats, seed=args.seed,
    )
    result = run_pipeline(cfg)
    write_pipeline_outputs(result, args.out)
    r = result.report
    print(f"{r.kernel['expression']}: cv {r.cv_accuracy_mean:.4f} +- {r.cv_accuracy_std:.4f}, "
          f"holdout {r.holdout_accuracy:.4f}")


HANDLERS = {
    "synth": cmd_synth,
    "preprocess": lambda a: _features_command(a, "raw"),
    "spectra": lambda a: _features_command(a, "spectra"),
    "explore": cmd_explore,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "learning-curve": cmd_learning_curve,
    "importance": cmd_importance,
    "pipeline": cmd_pipeline,
}


def run(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        HANDLERS[args.command](args)
    except ValidationError as exc:
        print(f"{args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"{args.command}: numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run())
