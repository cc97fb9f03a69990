"""Cross-validation plans, randomized search, learning curves, permutation
importance and confusion matrices."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ._parallel import parallel_map
from .errors import ValidationError
from .gpc import TrainedModel, fit
from .kernels import RBF, Constant, Kernel, Matern, RationalQuadratic, sq_dists
from .preprocess import FeatureMatrix

logger = logging.getLogger(__name__)

SCHEMES = ("kfold", "stratified_group_kfold")
_SCHEME_ALIASES = {"kf": "kfold", "kfold": "kfold", "sgkf": "stratified_group_kfold",
                   "stratified_group_kfold": "stratified_group_kfold"}


def normalize_scheme(scheme: str) -> str:
    try:
        return _SCHEME_ALIASES[str(scheme).lower()]
    except KeyError:
        raise ValidationError(f"unknown CV scheme {scheme!r}; use kf or sgkf") from None


@dataclass(frozen=True, eq=False)
class CvPlan:
    scheme: str
    folds: tuple[tuple[np.ndarray, np.ndarray], ...]
    k: int
    seed: int

    def fold_sizes(self) -> list[int]:
        return [len(val) for _, val in self.folds]


def _plan_from_assignment(scheme, fold_of, k, seed):
    idx = np.arange(len(fold_of))
    folds = tuple((idx[fold_of != f], idx[fold_of == f]) for f in range(k))
    return CvPlan(scheme, folds, k, seed)


def make_kfold(n: int, k: int = 5, seed: int = 0) -> CvPlan:
    """Seeded shuffle, then k contiguous folds whose sizes differ by at most one."""
    if k < 2:
        raise ValidationError("cross-validation needs k >= 2")
    if k > n:
        raise ValidationError(f"k={k} folds exceed n={n} rows")
    order = np.random.default_rng(seed).permutation(n)
    fold_of = np.empty(n, dtype=np.intp)
    for f, chunk in enumerate(np.array_split(order, k)):
        fold_of[chunk] = f
    return _plan_from_assignment("kfold", fold_of, k, seed)


def stratification_deviation(fold_counts: np.ndarray, label_totals: np.ndarray, k: int) -> float:
    """Sum of squared deviations of per-fold label counts from total/k."""
    return float(((fold_counts - label_totals[None, :] / k) ** 2).sum())


def group_label_counts(labels, groups):
    """(group_names, label_names, counts[g, l]) in sorted order."""
    labels = np.asarray(labels).astype(str)
    groups = np.asarray(groups).astype(str)
    gnames, ginv = np.unique(groups, return_inverse=True)
    lnames, linv = np.unique(labels, return_inverse=True)
    counts = np.zeros((len(gnames), len(lnames)), dtype=np.int64)
    np.add.at(counts, (ginv, linv), 1)
    return gnames, lnames, counts, ginv


def make_sgkf(labels, groups, k: int = 5, seed: int = 0) -> CvPlan:
    """Stratified group k-fold by greedy balancing.

    Groups are visited largest first (ties in seeded random order) and each
    goes to the fold whose label counts end up closest, in squared deviation,
    to the stratified ideal total/k. Folds that would otherwise stay empty
    are filled first once the remaining groups are just enough to cover them.
    Ties between folds go to the lowest fold index.
    """
    if k < 2:
        raise ValidationError("cross-validation needs k >= 2")
    _, _, counts, ginv = group_label_counts(labels, groups)
    n_groups = counts.shape[0]
    if n_groups < k:
        raise ValidationError(f"stratified group k-fold needs at least k={k} groups, got {n_groups}")
    totals = counts.sum(axis=0)
    ideal = totals / k
    rng = np.random.default_rng(seed)
    tiebreak = rng.permutation(n_groups)
    order = sorted(range(n_groups), key=lambda g: (-counts[g].sum(), tiebreak[g]))
    fold_counts = np.zeros((k, counts.shape[1]))
    fold_sizes = np.zeros(k, dtype=np.int64)
    group_fold = np.empty(n_groups, dtype=np.intp)
    for pos, g in enumerate(order):
        remaining = n_groups - pos
        empty = np.flatnonzero(fold_sizes == 0)
        candidates = empty if len(empty) >= remaining else np.arange(k)
        cost = [((fold_counts[f] + counts[g] - ideal) ** 2).sum() - ((fold_counts[f] - ideal) ** 2).sum()
                for f in candidates]
        f = int(candidates[int(np.argmin(cost))])
        group_fold[g] = f
        fold_counts[f] += counts[g]
        fold_sizes[f] += counts[g].sum()
    return _plan_from_assignment("stratified_group_kfold", group_fold[ginv], k, seed)


def make_plan(scheme: str, features: FeatureMatrix, k: int = 5, seed: int = 0) -> CvPlan:
    scheme = normalize_scheme(scheme)
    if scheme == "kfold":
        return make_kfold(len(features), k, seed)
    return make_sgkf(features.labels, features.groups, k, seed)


def validate_plan(plan: CvPlan, n: int, groups=None) -> None:
    seen = np.zeros(n, dtype=np.int64)
    for train, val in plan.folds:
        if np.intersect1d(train, val).size:
            raise ValidationError("fold train and validation indices overlap")
        if len(train) + len(val) != n:
            raise ValidationError("fold does not cover every row")
        seen[val] += 1
        if groups is not None and plan.scheme == "stratified_group_kfold":
            g = np.asarray(groups)
            if set(g[train]) & set(g[val]):
                raise ValidationError("group leakage between train and validation")
    if not np.all(seen == 1):
        raise ValidationError("validation sets do not partition the rows")


# -- cross-validation -------------------------------------------------------------


@dataclass(frozen=True)
class CvResult:
    mean: float
    std: float
    per_fold: tuple[float, ...]


def accuracy(true, pred) -> float:
    true = np.asarray(true, dtype=object)
    return float(np.mean(true == np.asarray(pred, dtype=object)))


def _check_folds(features: FeatureMatrix, plan: CvPlan, label_order):
    labels = features.labels
    for i, (train, _) in enumerate(plan.folds):
        missing = sorted(set(label_order) - set(labels[train]))
        if missing:
            raise ValidationError(f"fold {i}: training partition lacks label(s) {', '.join(missing)}")


def cross_validate(features: FeatureMatrix, kernel: Kernel, plan: CvPlan, sqdist=None, threads=None) -> CvResult:
    """Fit on each fold's training rows and score accuracy on its validation rows.

    Returns mean and population standard deviation over folds.
    """
    if plan.k < 2 or len(plan.folds) < 2:
        raise ValidationError("cross-validation needs k >= 2")
    validate_plan(plan, len(features))
    label_order = features.label_set
    _check_folds(features, plan, label_order)
    d2 = sq_dists(features.values) if sqdist is None else sqdist
    labels = features.labels

    def run(fold):
        train, val = fold
        model = fit(features.take(train), kernel, label_order=label_order,
                    sqdist=d2[np.ix_(train, train)], threads=1)
        pred = model.labels_from_proba(model.predict_proba_sqdist(d2[np.ix_(train, val)]))
        return accuracy(labels[val], pred)

    accs = tuple(parallel_map(run, plan.folds, threads))
    return CvResult(float(np.mean(accs)), float(np.std(accs)), accs)


# -- randomized search ---------------------------------------------------------------


@dataclass(frozen=True)
class SearchSpace:
    """Log-uniform ranges; ``family`` picks the kernel combination searched."""

    c: tuple[float, float] = (1e-2, 1e5)
    length_scale: tuple[float, float] = (1e-2, 1e3)
    alpha: tuple[float, float] = (1e-2, 1e5)
    iterations: int = 10
    seed: int = 0
    family: str = "C*RQ"
    matern_nu: float = 1.5

    def __post_init__(self):
        for name in ("c", "length_scale", "alpha"):
            lo, hi = getattr(self, name)
            if not (0 < lo < hi):
                raise ValidationError(f"search range for {name} needs 0 < lower < upper")
        if self.iterations < 1:
            raise ValidationError("search iterations must be >= 1")
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown kernel family {self.family!r}; choose from {', '.join(FAMILIES)}")

    def draw(self) -> list[Kernel]:
        rng = np.random.default_rng(self.seed)

        def loguniform(bounds):
            lo, hi = np.log(bounds)
            return float(np.exp(rng.uniform(lo, hi)))

        out = []
        for _ in range(self.iterations):
            c, l, a = loguniform(self.c), loguniform(self.length_scale), loguniform(self.alpha)
            out.append(FAMILIES[self.family](c, l, a, self.matern_nu))
        return out


FAMILIES = {
    "C*RQ": lambda c, l, a, nu: Constant(c) * RationalQuadratic(l, a),
    "C*RBF": lambda c, l, a, nu: Constant(c) * RBF(l),
    "C*M": lambda c, l, a, nu: Constant(c) * Matern(l, nu),
    "C+RQ": lambda c, l, a, nu: Constant(c) + RationalQuadratic(l, a),
    "C+RBF": lambda c, l, a, nu: Constant(c) + RBF(l),
    "C+M": lambda c, l, a, nu: Constant(c) + Matern(l, nu),
}


@dataclass(frozen=True)
class SearchResult:
    kernel: Kernel
    mean_accuracy: float
    std_accuracy: float
    candidates: tuple[tuple[Kernel, CvResult], ...] = field(default=())


def random_search(features: FeatureMatrix, space: SearchSpace, plan: CvPlan, threads=None) -> SearchResult:
    """Evaluate ``space.iterations`` seeded draws by cross-validation and keep
    the best mean accuracy (earliest draw on ties). Refitting on all
    training rows is left to the caller."""
    d2 = sq_dists(features.values)
    kernels = space.draw()
    results = parallel_map(lambda k: cross_validate(features, k, plan, sqdist=d2, threads=1), kernels, threads)
    best = 0
    for i, res in enumerate(results):
        logger.info("search %d/%d %s: %.4f +- %.4f", i + 1, len(kernels), kernels[i], res.mean, res.std)
        if res.mean > results[best].mean:
            best = i
    return SearchResult(kernels[best], results[best].mean, results[best].std, tuple(zip(kernels, results)))


# -- learning curves -------------------------------------------------------------------


@dataclass(frozen=True)
class CurvePoint:
    train_size: int
    mean_accuracy: float
    std_accuracy: float
    fold_accuracies: tuple[float, ...] = ()
    degenerate: bool = False
    reason: str = ""


def learning_curve(
    features: FeatureMatrix,
    holdout: FeatureMatrix,
    kernel: Kernel,
    sizes=(100, 200, 400, 600),
    scheme: str = "kfold",
    seed: int = 0,
    k: int = 5,
    threads=None,
) -> list[CurvePoint]:
    """Holdout accuracy of fold models trained on growing prefixes of the
    (once shuffled) training rows.

    For each size, a k-fold plan of the chosen scheme is built on the prefix,
    one model is fitted per fold training part and each is scored on the
    holdout. Sizes where a fold cannot be built or misses a label come back
    flagged as degenerate.
    """
    scheme = normalize_scheme(scheme)
    sizes = [int(s) for s in sizes]
    if not sizes or max(sizes) > len(features) or min(sizes) < 2:
        raise ValidationError(f"learning-curve sizes must lie in [2, {len(features)}]")
    if len(holdout) == 0:
        raise ValidationError("learning curve needs a non-empty holdout set")
    label_order = features.label_set
    order = np.random.default_rng(seed).permutation(len(features))
    d2_all = sq_dists(features.values)
    d2_hold = sq_dists(features.values, holdout.values)
    true = holdout.labels
    points = []
    for size in sizes:
        rows = order[:size]
        subset = features.take(rows)
        try:
            plan = make_plan(scheme, subset, k, seed)
            _check_folds(subset, plan, label_order)
        except ValidationError as exc:
            logger.warning("learning curve size %d degenerate: %s", size, exc)
            points.append(CurvePoint(size, float("nan"), float("nan"), (), True, str(exc)))
            continue

        def run(fold):
            train = rows[fold[0]]
            model = fit(features.take(train), kernel, label_order=label_order,
                        sqdist=d2_all[np.ix_(train, train)], threads=1)
            return accuracy(true, model.labels_from_proba(model.predict_proba_sqdist(d2_hold[train])))

        accs = tuple(parallel_map(run, plan.folds, threads))
        points.append(CurvePoint(size, float(np.mean(accs)), float(np.std(accs)), accs))
    return points


# -- permutation importance ---------------------------------------------------------------


@dataclass(frozen=True)
class ChannelImportance:
    channel: str
    mean_drop: float
    std_drop: float
    drops: tuple[float, ...]


def permutation_importance(model: TrainedModel, holdout: FeatureMatrix, repeats: int = 10,
                           seed: int = 0, threads=None) -> tuple[float, list[ChannelImportance]]:
    """Accuracy drop when one channel block is shuffled across holdout rows.

    The same row permutation is applied to every column of the block; each
    repeat draws a fresh permutation. Squared distances are additive over
    blocks, so a permuted block only swaps rows of its own distance term.
    Returns the baseline accuracy and one entry per channel.
    """
    if len(holdout) == 0:
        raise ValidationError("permutation importance needs a non-empty holdout set")
    if repeats < 1:
        raise ValidationError("repeats must be >= 1")
    model._check(holdout)
    true = holdout.labels
    slices = holdout.channel_slices()
    names = holdout.channel_names
    # parts[c] is (n_train, m) squared distances restricted to block c.
    parts = [sq_dists(model.X_train[:, s], holdout.values[:, s]) for s in slices]

    def total(replace_index=None, perm=None):
        out = np.zeros_like(parts[0])
        for c, part in enumerate(parts):
            out += part[:, perm] if c == replace_index else part
        return out

    def score(d2):
        return accuracy(true, model.labels_from_proba(model.predict_proba_sqdist(d2)))

    baseline = score(total())
    rng = np.random.default_rng(seed)
    perms = [[rng.permutation(len(holdout)) for _ in range(repeats)] for _ in slices]
    tasks = [(c, r) for c in range(len(slices)) for r in range(repeats)]
    scores = parallel_map(lambda cr: score(total(cr[0], perms[cr[0]][cr[1]])), tasks, threads)
    result = []
    for c, name in enumerate(names):
        drops = tuple(baseline - s for s in scores[c * repeats:(c + 1) * repeats])
        result.append(ChannelImportance(name, float(np.mean(drops)), float(np.std(drops)), drops))
    return baseline, result


# -- confusion matrix --------------------------------------------------------------------------


def confusion_matrix(true_labels, predicted_labels, label_order) -> np.ndarray:
    """Counts with rows = true label, columns = predicted label."""
    true_labels = list(true_labels)
    predicted_labels = list(predicted_labels)
    if len(true_labels) != len(predicted_labels):
        raise ValidationError("true and predicted label lists differ in length")
    index = {label: i for i, label in enumerate(label_order)}
    out = np.zeros((len(index), len(index)), dtype=np.int64)
    for t, p in zip(true_labels, predicted_labels):
        if t not in index or p not in index:
            raise ValidationError(f"unknown label {t if t not in index else p!r}")
        out[index[t], index[p]] += 1
    return out
