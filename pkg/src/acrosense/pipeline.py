"""End-to-end run: filter, split, featurize, search, refit, evaluate."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import CHANNELS, Corpus, SplitPlan, filter_rare_labels, load_corpus, make_split
from .errors import ValidationError
from .evaluation import (
    SearchSpace, accuracy, confusion_matrix, cross_validate, learning_curve, make_plan,
    normalize_scheme, permutation_importance, random_search,
)
from .gpc import TrainedModel, fit
from .kernels import Kernel, parse_kernel, sq_dists
from .preprocess import FeatureMatrix, PipelineConfig, build_features
from .report import EvalReport, plot_importance, plot_learning_curves
from .spectral import SpectrumConfig, build_spectra_features
from .synthgen import SynthConfig, generate

logger = logging.getLogger(__name__)


@dataclass
class RunConfig:
    manifest: str | None = None
    synth: dict = field(default_factory=dict)
    data: str = "spectra"
    mode: str = "interpolate"
    target_length: int = 898
    bins: int = 1000
    channels: tuple[str, ...] = CHANNELS
    min_count: int = 10
    holdout_athletes: int = 4
    target_holdout: int = 254
    cv: str = "sgkf"
    folds: int = 5
    search_iters: int = 10
    family: str = "C*RQ"
    kernel: str | None = None
    optimize_lml: bool = False
    sizes: tuple[int, ...] = (100, 200, 400, 600)
    repeats: int = 10
    seed: int = 0

    def resolved(self) -> dict:
        d = asdict(self)
        d["cv"] = normalize_scheme(self.cv)
        d["channels"] = list(self.channels)
        d["sizes"] = list(self.sizes)
        return d


def kernel_summary(kernel: Kernel) -> dict:
    names = kernel.param_names()
    values = kernel.params()
    params = {}
    for name, value in zip(names, values):
        key, i = name, 2
        while key in params:
            key, i = f"{name}{i}", i + 1
        params[key] = value
    return {"expression": str(kernel), "hyperparameters": params}


def load_or_generate(cfg: RunConfig) -> Corpus:
    if cfg.manifest:
        return load_corpus(cfg.manifest)
    synth = dict(cfg.synth)
    synth.setdefault("seed", cfg.seed)
    return generate(SynthConfig.from_dict(synth))


def featurize(corpus: Corpus, cfg: RunConfig, fit_ids) -> FeatureMatrix:
    if cfg.data == "spectra":
        return build_spectra_features(corpus, SpectrumConfig(bins=cfg.bins, channels=tuple(cfg.channels)), fit_ids)
    if cfg.data == "raw":
        pc = PipelineConfig(mode=cfg.mode, target_length=cfg.target_length, channels=tuple(cfg.channels))
        return build_features(corpus, pc, fit_ids)
    raise ValidationError(f"data must be 'spectra' or 'raw', got {cfg.data!r}")


def split_features(features: FeatureMatrix, split: SplitPlan) -> tuple[FeatureMatrix, FeatureMatrix]:
    pos = {rid: i for i, rid in enumerate(features.ids)}
    return (features.take([pos[i] for i in split.train_ids]),
            features.take([pos[i] for i in split.holdout_ids]))


@dataclass
class PipelineResult:
    report: EvalReport
    model: TrainedModel
    train: FeatureMatrix
    holdout: FeatureMatrix
    split: SplitPlan


def run_pipeline(cfg: RunConfig, with_curve: bool = True, with_importance: bool = True,
                 threads=None) -> PipelineResult:
    seed = int(cfg.seed)
    scheme = normalize_scheme(cfg.cv)
    corpus = filter_rare_labels(load_or_generate(cfg), cfg.min_count)
    split = make_split(corpus, cfg.holdout_athletes, cfg.target_holdout, seed)
    logger.info("split: %d train, %d holdout (%s)", len(split.train_ids), len(split.holdout_ids),
                ", ".join(split.holdout_athletes))
    train, holdout = split_features(featurize(corpus, cfg, split.train_ids), split)
    plan = make_plan(scheme, train, cfg.folds, seed)

    if cfg.kernel:
        kernel = parse_kernel(cfg.kernel)
        cv = cross_validate(train, kernel, plan, threads=threads)
        cv_mean, cv_std = cv.mean, cv.std
    else:
        space = SearchSpace(iterations=cfg.search_iters, seed=seed, family=cfg.family)
        result = random_search(train, space, plan, threads=threads)
        kernel, cv_mean, cv_std = result.kernel, result.mean_accuracy, result.std_accuracy

    model = fit(train, kernel, optimize_lml=cfg.optimize_lml, seed=seed, threads=threads)
    report_kernel = kernel_summary(model.kernel)
    report_kernel["log_marginal_likelihood"] = model.log_marginal_likelihood

    holdout_acc, cm = None, []
    if len(holdout):
        pred = model.predict(holdout)
        holdout_acc = accuracy(holdout.labels, pred)
        cm = confusion_matrix(holdout.labels, pred, model.label_order).tolist()

    curve, importance = [], []
    if with_curve and len(holdout):
        sizes = [s for s in cfg.sizes if s <= len(train)]
        points = learning_curve(train, holdout, model.kernel, sizes, scheme, seed, cfg.folds, threads=threads)
        curve = [asdict(p) for p in points]
    if with_importance and len(holdout):
        baseline, chans = permutation_importance(model, holdout, cfg.repeats, seed, threads=threads)
        importance = [{"channel": c.channel, "mean_drop": c.mean_drop, "std_drop": c.std_drop} for c in chans]

    report = EvalReport(
        scheme=scheme,
        kernel=report_kernel,
        cv_accuracy_mean=cv_mean,
        cv_accuracy_std=cv_std,
        holdout_accuracy=holdout_acc,
        label_order=list(model.label_order),
        confusion_matrix=cm,
        learning_curve=curve,
        importance=importance,
        seeds={"split": seed, "cv": seed, "search": seed, "learning_curve": seed, "importance": seed},
        config=cfg.resolved(),
    )
    report.check()
    return PipelineResult(report, model, train, holdout, split)


def write_pipeline_outputs(result: PipelineResult, out_dir) -> None:
    out = Path(out_dir)
    result.report.write(out)
    result.model.save(out / "model.acm")
    if result.report.learning_curve:
        plot_learning_curves(out / "learning_curve.svg", {result.report.scheme: result.report.learning_curve})
    if result.report.importance:
        plot_importance(out / "importance.svg", result.report.importance)
