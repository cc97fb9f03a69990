import itertools

import numpy as np
import pytest

from acrosense.errors import ValidationError
from acrosense.evaluation import (
    SearchSpace, accuracy, confusion_matrix, cross_validate, group_label_counts, learning_curve, make_kfold,
    make_plan, make_sgkf, normalize_scheme, permutation_importance, random_search, validate_plan,
)
from acrosense.gpc import fit
from acrosense.kernels import RBF, Constant, RationalQuadratic
from conftest import make_features, two_blobs


def brute_force_max_deviation(counts, k):
    """Smallest achievable max |fold count - total/k| over all assignments with no empty fold."""
    g = counts.shape[0]
    ideal = counts.sum(0) / k
    assign = np.array(list(itertools.product(range(k), repeat=g - 1)))
    assign = np.hstack([np.zeros((len(assign), 1), int), assign])  # fold relabelling symmetry
    onehot = np.eye(k)[assign]
    fold_counts = np.einsum("agk,gl->akl", onehot, counts)
    nonempty = (onehot.sum(1) > 0).all(1)
    return np.abs(fold_counts - ideal).max((1, 2))[nonempty].min()


def random_grouped_corpus(seed):
    rng = np.random.default_rng(seed)
    g, n_labels = int(rng.integers(5, 9)), int(rng.integers(2, 5))
    counts = rng.poisson(rng.uniform(0, 6, size=(g, n_labels)))
    counts[counts.sum(1) == 0, 0] = 1
    labels, groups = [], []
    for gi in range(g):
        for li in range(n_labels):
            labels += [f"L{li}"] * int(counts[gi, li])
            groups += [f"G{gi}"] * int(counts[gi, li])
    return np.array(labels), np.array(groups)


@pytest.mark.parametrize("n,sizes", [(10, [2] * 5), (11, [3, 2, 2, 2, 2])])
def test_kfold_sizes(n, sizes):
    plan = make_kfold(n, 5, seed=1)
    assert plan.fold_sizes() == sizes
    validate_plan(plan, n)


def test_kfold_partition_over_seeds():
    for seed in range(100):
        n = 5 + seed
        plan = make_kfold(n, 5, seed)
        counts = np.zeros(n, int)
        for train, val in plan.folds:
            counts[val] += 1
            assert not set(train) & set(val)
            assert len(train) + len(val) == n
        assert np.all(counts == 1)
        assert max(plan.fold_sizes()) - min(plan.fold_sizes()) <= 1


def test_k_bounds():
    with pytest.raises(ValidationError):
        make_kfold(10, 1)
    with pytest.raises(ValidationError):
        make_kfold(3, 5)
    with pytest.raises(ValidationError):
        make_sgkf(["a"] * 4, ["g1", "g1", "g2", "g3"], 5)
    with pytest.raises(ValidationError):
        normalize_scheme("loo")


def test_sgkf_symmetric_case():
    labels, groups = [], []
    for g in range(10):
        for label in ("A", "A", "B", "C"):
            labels.append(label)
            groups.append(f"G{g}")
    plan = make_sgkf(labels, groups, 5, seed=3)
    labels = np.array(labels)
    for _, val in plan.folds:
        assert len(set(np.array(groups)[val])) == 2
        assert [np.sum(labels[val] == l) for l in "ABC"] == [4, 2, 2]


def test_sgkf_against_exhaustive_search():
    for seed in range(100):
        labels, groups = random_grouped_corpus(seed)
        plan = make_sgkf(labels, groups, 5, seed)
        validate_plan(plan, len(labels), groups)
        for train, val in plan.folds:
            assert not set(groups[train]) & set(groups[val])
        _, names, counts, _ = group_label_counts(labels, groups)
        fold_counts = np.array([[np.sum(labels[val] == l) for l in names] for _, val in plan.folds])
        deviation = np.abs(fold_counts - counts.sum(0) / 5).max()
        assert deviation <= brute_force_max_deviation(counts, 5) + 2 + 1e-9


def test_sgkf_deterministic(small_corpus):
    from acrosense.preprocess import PipelineConfig, build_features

    fm = build_features(small_corpus, PipelineConfig(target_length=8), small_corpus.ids)
    a, b = make_plan("sgkf", fm, 5, 4), make_plan("sgkf", fm, 5, 4)
    for (ta, va), (tb, vb) in zip(a.folds, b.folds):
        np.testing.assert_array_equal(va, vb)
        np.testing.assert_array_equal(ta, tb)


def blob_features(seed=0, n_per=15):
    X, y = two_blobs(n_per=n_per, seed=seed)
    groups = [f"A{i % 6}" for i in range(len(y))]
    return make_features(X, y, groups)


def test_cross_validate_separable_and_parallel_safe():
    fm = blob_features()
    kernel = Constant(10.0) * RBF(2.0)
    for scheme in ("kf", "sgkf"):
        plan = make_plan(scheme, fm, 5, 0)
        serial = cross_validate(fm, kernel, plan, threads=1)
        parallel = cross_validate(fm, kernel, plan, threads=4)
        assert serial == parallel
        assert serial.mean == 1.0 and serial.std == 0.0


def test_cross_validate_rejects_fold_missing_label():
    X = np.random.default_rng(0).normal(size=(10, 2))
    labels = ["A"] * 8 + ["B"] * 2
    fm = make_features(X, labels, [f"G{i}" for i in range(10)])
    from acrosense.evaluation import CvPlan

    idx = np.arange(10)
    plan = CvPlan("kfold", ((idx[:5], idx[5:]), (idx[5:], idx[:5])), 2, 0)
    with pytest.raises(ValidationError, match="fold 0"):
        cross_validate(fm, RBF(1.0), plan)


def test_random_search_contract():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(40, 3))
    labels = np.where(X[:, 0] + 0.5 * rng.normal(size=40) > 0, "P", "Q")
    fm = make_features(X, labels, [f"A{i % 5}" for i in range(40)])
    plan = make_plan("kf", fm, 5, 0)
    space = SearchSpace(iterations=6, seed=2)
    res = random_search(fm, space, plan)
    again = random_search(fm, space, plan, threads=1)
    assert res.kernel == again.kernel and res.mean_accuracy == again.mean_accuracy
    assert all(res.mean_accuracy >= cv.mean for _, cv in res.candidates)
    first = min(i for i, (_, cv) in enumerate(res.candidates) if cv.mean == res.mean_accuracy)
    assert res.kernel == res.candidates[first][0]
    single = random_search(fm, SearchSpace(iterations=1, seed=2), plan)
    assert single.kernel == space.draw()[0]


def test_search_space_draws_in_range():
    for kernel in SearchSpace(iterations=200, seed=5).draw():
        c, ell, a = kernel.params()
        assert 1e-2 <= c <= 1e5 and 1e-2 <= ell <= 1e3 and 1e-2 <= a <= 1e5
    with pytest.raises(ValidationError):
        SearchSpace(c=(1.0, 1.0))
    with pytest.raises(ValidationError):
        SearchSpace(iterations=0)


def test_learning_curve_definition():
    train = blob_features(seed=2, n_per=20)
    holdout = blob_features(seed=3, n_per=5)
    kernel = Constant(10.0) * RBF(2.0)
    (point,) = learning_curve(train, holdout, kernel, sizes=[40], scheme="kf", seed=0)
    # Oracle: the same five refits done by hand.
    order = np.random.default_rng(0).permutation(40)
    plan = make_kfold(40, 5, 0)
    accs = []
    for tr, _ in plan.folds:
        model = fit(train.take(order[tr]), kernel, label_order=train.label_set)
        accs.append(accuracy(holdout.labels, model.predict(holdout.values)))
    assert point.fold_accuracies == tuple(accs)
    assert point.mean_accuracy == np.mean(accs)


def test_learning_curve_degenerate_point():
    train = blob_features(seed=4, n_per=20)
    holdout = blob_features(seed=5, n_per=5)
    points = learning_curve(train, holdout, RBF(2.0), sizes=[3, 40], scheme="kf", seed=0)
    assert points[0].degenerate and points[0].reason
    assert not points[1].degenerate
    with pytest.raises(ValidationError):
        learning_curve(train, holdout, RBF(2.0), sizes=[41])


def planted_problem(seed, n=60, blocks=3, width=4):
    rng = np.random.default_rng(seed)
    labels = np.where(np.arange(n) % 2 == 0, "P", "Q")
    X = rng.normal(size=(n, blocks * width))
    X[:, width:2 * width] += np.where(labels == "P", 1.5, -1.5)[:, None]
    X[:, 2 * width:] = 0.0
    names = ["acc_x", "gyr_y", "mag_z"]
    return make_features(X, labels, channels=names)


def test_importance_constant_channel_and_ranking():
    train, hold = planted_problem(0), planted_problem(1)
    model = fit(train, Constant(5.0) * RationalQuadratic(3.0, 2.0))
    baseline, imp = permutation_importance(model, hold, repeats=5, seed=0)
    by_name = {c.channel: c for c in imp}
    assert by_name["mag_z"].mean_drop == 0.0 and by_name["mag_z"].std_drop == 0.0
    assert max(imp, key=lambda c: c.mean_drop).channel == "gyr_y"
    assert all(abs(c.mean_drop) <= baseline for c in imp)
    again = permutation_importance(model, hold, repeats=5, seed=0, threads=1)
    assert (baseline, imp) == again
    one = permutation_importance(model, hold, repeats=1, seed=9)
    assert one == permutation_importance(model, hold, repeats=1, seed=9)


def test_importance_matches_explicit_permutation():
    train, hold = planted_problem(2), planted_problem(3)
    model = fit(train, Constant(5.0) * RBF(3.0))
    _, imp = permutation_importance(model, hold, repeats=3, seed=4)
    rng = np.random.default_rng(4)
    perms = [[rng.permutation(len(hold)) for _ in range(3)] for _ in range(3)]
    base = accuracy(hold.labels, model.predict(hold.values))
    for c, s in enumerate(hold.channel_slices()):
        for r in range(3):
            X = hold.values.copy()
            X[:, s] = X[perms[c][r]][:, s]
            assert imp[c].drops[r] == pytest.approx(base - accuracy(hold.labels, model.predict(X)), abs=1e-12)


def test_confusion_matrix():
    order = ["BF", "BHS", "BL"]
    cm = confusion_matrix(["BF", "BHS", "BL"], ["BF", "BHS", "BL"], order)
    np.testing.assert_array_equal(cm, np.eye(3, dtype=int))
    true = ["BHS"] * 81 + ["BL"] * 20 + ["BF"] * 5
    pred = ["BHS"] * 81 + ["BHS"] * 9 + ["BL"] * 11 + ["BF"] * 5
    cm = confusion_matrix(true, pred, order)
    assert cm[2, 1] == 9 and cm[1].sum() == 81
    np.testing.assert_array_equal(cm.sum(1), [5, 81, 20])
    assert abs(np.trace(cm) / cm.sum() - accuracy(true, pred)) < 1e-12
    with pytest.raises(ValidationError):
        confusion_matrix(["X"], ["BF"], order)
    with pytest.raises(ValidationError):
        confusion_matrix(["BF"], [], order)
