"""PCA, k-means and the adjusted Rand index for exploratory structure checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._parallel import parallel_map
from .errors import ValidationError
from .preprocess import FeatureMatrix


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    explained_variance_ratio: np.ndarray

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) @ self.components.T

    def inverse_transform(self, Z) -> np.ndarray:
        return np.asarray(Z) @ self.components + self.mean


@dataclass(frozen=True, eq=False)
class ClusteringReport:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    ari: float | None = None
    inertia_trace: tuple[float, ...] = ()


def fit_pca(features, q: int) -> PcaModel:
    """Principal axes from the SVD of the centred data.

    Variances use the N-1 denominator; ratios are relative to the total
    variance, so they sum to 1 when q = min(N-1, D). Each axis is signed so
    its largest-magnitude loading is positive.
    """
    X = features.values if isinstance(features, FeatureMatrix) else np.asarray(features, dtype=np.float64)
    n, d = X.shape
    if n < 2:
        raise ValidationError("PCA needs at least 2 rows")
    if not 1 <= q <= min(n - 1, d):
        raise ValidationError(f"q must be in [1, {min(n - 1, d)}], got {q}")
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    variance = s**2 / (n - 1)
    total = variance.sum()
    comps = vt[:q].copy()
    pivot = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(q), pivot])
    signs[signs == 0] = 1.0
    comps *= signs[:, None]
    ratio = variance[:q] / total if total > 0 else np.zeros(q)
    return PcaModel(mean, comps, variance[:q].copy(), ratio)


def _sq_dists(X, C):
    d = (X * X).sum(1)[:, None] + (C * C).sum(1)[None, :] - 2.0 * X @ C.T
    return np.maximum(d, 0.0)


def _kmeans_pp(X, k, rng):
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    closest = _sq_dists(X, centers[0][None, :])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(X[idx])
        closest = np.minimum(closest, _sq_dists(X, X[idx][None, :])[:, 0])
    return np.array(centers)


def _lloyd(X, centers, max_iter, tol):
    k = centers.shape[0]
    trace = []
    for _ in range(max_iter):
        d = _sq_dists(X, centers)
        assign = np.argmin(d, axis=1)
        trace.append(float(d[np.arange(len(X)), assign].sum()))
        new = np.empty_like(centers)
        for j in range(k):
            members = X[assign == j]
            if len(members):
                new[j] = members.mean(axis=0)
            else:
                # Empty cluster: move it to the point farthest from its centroid.
                far = int(np.argmax(d[np.arange(len(X)), assign]))
                new[j] = X[far]
                assign[far] = j
        shift = float(np.sqrt(((new - centers) ** 2).sum(axis=1)).max())
        centers = new
        if shift < tol:
            break
    d = _sq_dists(X, centers)
    assign = np.argmin(d, axis=1)
    inertia = float(((X - centers[assign]) ** 2).sum())
    trace.append(inertia)
    return assign, centers, inertia, tuple(trace)


def kmeans(projected, k: int, seed: int, n_init: int = 10, max_iter: int = 300, tol: float = 1e-6) -> ClusteringReport:
    """k-means++ seeding plus Lloyd iterations; the best of ``n_init`` restarts wins.

    Restart seeds are derived from ``seed`` up front, so results do not depend
    on how restarts are scheduled; ties go to the lowest restart index.
    """
    X = np.asarray(projected, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError("kmeans expects an N x q matrix")
    if not 1 <= k <= X.shape[0]:
        raise ValidationError(f"k must be in [1, {X.shape[0]}], got {k}")
    seeds = np.random.SeedSequence(seed).spawn(n_init)

    def run(ss):
        rng = np.random.default_rng(ss)
        return _lloyd(X, _kmeans_pp(X, k, rng), max_iter, tol)

    results = parallel_map(run, seeds)
    best = min(range(n_init), key=lambda i: (results[i][2], i))
    assign, centers, inertia, trace = results[best]
    return ClusteringReport(assign, centers, inertia, None, trace)


def _comb2(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1) / 2.0


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Hubert-Arabie adjusted Rand index.

    Returns 1.0 in the degenerate case where the expected and maximum index
    coincide (both partitions all-singletons or both a single cluster).
    """
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError("label vectors must be 1-D and of equal length")
    n = a.size
    if n < 2:
        raise ValidationError("ARI needs at least 2 items")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1))
    np.add.at(table, (ia, ib), 1)
    index = _comb2(table).sum()
    sum_a = _comb2(table.sum(axis=1)).sum()
    sum_b = _comb2(table.sum(axis=0)).sum()
    expected = sum_a * sum_b / _comb2(n)
    maximum = 0.5 * (sum_a + sum_b)
    if maximum == expected:
        return 1.0
    return float((index - expected) / (maximum - expected))


def explore(features: FeatureMatrix, q: int = 4, k: int | None = None, seed: int = 0):
    """PCA to q components, k-means in that space (k defaults to the label
    count) and the ARI against the true labels."""
    pca = fit_pca(features, q)
    projected = pca.transform(features.values)
    k = k or len(features.label_set)
    report = kmeans(projected, k, seed)
    ari = adjusted_rand_index(features.labels.astype(str), report.assignments)
    report = ClusteringReport(report.assignments, report.centroids, report.inertia, ari, report.inertia_trace)
    return pca, projected, report
