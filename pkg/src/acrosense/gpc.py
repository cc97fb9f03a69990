"""Gaussian process classification with the Laplace approximation.

Binary inference follows the Newton scheme built on B = I + W^1/2 K W^1/2
(as in Gaussian Processes for Machine Learning) with a logistic likelihood.
Multiclass prediction is one-vs-rest with per-row renormalisation.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.special import expit, log_expit

from ._parallel import parallel_map
from .errors import NumericalError, ValidationError
from .kernels import Kernel, parse_kernel, sq_dists, to_expression
from .preprocess import FeatureMatrix, stats_hash

DEFAULT_JITTER = 1e-10
ESCALATED_JITTER = 1e-6
MODEL_VERSION = 1
_MAGIC = b"ACM1"
_GH_NODES, _GH_WEIGHTS = hermgauss(33)


@dataclass(frozen=True, eq=False)
class LaplaceState:
    """Posterior mode and the factors needed for prediction, for one binary task."""

    f_hat: np.ndarray
    sqrt_w: np.ndarray
    chol: np.ndarray
    alpha: np.ndarray
    log_marginal_likelihood: float
    objective_trace: tuple[float, ...] = ()
    jitter: float = DEFAULT_JITTER


def _objective(a, f, y):
    return -0.5 * float(a @ f) + float(log_expit(y * f).sum())


def _factor(K, sqrt_w):
    B = np.eye(len(sqrt_w)) + sqrt_w[:, None] * K * sqrt_w[None, :]
    return cholesky(B, lower=True, check_finite=False)


def laplace_fit_binary(K, y, tol: float = 1e-8, max_newton: int = 100, jitter: float = DEFAULT_JITTER) -> LaplaceState:
    """Find the posterior mode of the latent function for labels ``y`` in {-1, +1}.

    Each Newton step is damped by halving until the objective
    -1/2 a.f + sum log sigma(y f) does not decrease. Iteration stops once
    the objective gains less than ``tol``; a few undamped polishing steps
    then drive the gradient to round-off level.
    """
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    if K.shape != (n, n):
        raise ValidationError(f"kernel matrix shape {K.shape} does not match {n} labels")
    if n < 2 or not np.all(np.isin(y, (-1.0, 1.0))) or len(np.unique(y)) < 2:
        raise ValidationError("binary Laplace fit needs n >= 2 and both labels +1 and -1")
    try:
        return _newton(K, y, tol, max_newton, jitter)
    except LinAlgError:
        if jitter >= ESCALATED_JITTER:
            raise NumericalError("Cholesky factorisation failed even with escalated jitter") from None
    try:
        return _newton(K, y, tol, max_newton, ESCALATED_JITTER)
    except LinAlgError:
        raise NumericalError(f"Cholesky factorisation failed with jitter {ESCALATED_JITTER}") from None


def _newton(K, y, tol, max_newton, jitter):
    n = len(y)
    K = K + jitter * np.eye(n)
    t = 0.5 * (y + 1.0)
    f = np.zeros(n)
    a = np.zeros(n)
    obj = _objective(a, f, y)
    trace = [obj]
    converged = False
    for _ in range(max_newton):
        pi = expit(f)
        w = pi * (1.0 - pi)
        sw = np.sqrt(w)
        L = _factor(K, sw)
        b = w * f + (t - pi)
        a_new = b - sw * cho_solve((L, True), sw * (K @ b), check_finite=False)
        da = a_new - a
        step = 1.0
        while True:
            a_try = a + step * da
            f_try = K @ a_try
            obj_try = _objective(a_try, f_try, y)
            if obj_try >= obj or step < 1e-10:
                break
            step *= 0.5
        if obj_try < obj:
            # Even a tiny step lowers the objective: we are at the mode up to round-off.
            converged = True
            break
        gain = obj_try - obj
        a, f, obj = a_try, f_try, obj_try
        trace.append(obj)
        if gain < tol:
            converged = True
            break
    if not converged:
        raise NumericalError(
            f"Newton iteration did not converge in {max_newton} steps; objective trace tail: {trace[-5:]}"
        )
    a, f = _polish(K, t, a, f)
    pi = expit(f)
    sw = np.sqrt(pi * (1.0 - pi))
    # C order so a reloaded model runs the same BLAS paths bit for bit.
    L = np.ascontiguousarray(_factor(K, sw))
    lml = obj - float(np.log(np.diag(L)).sum())
    return LaplaceState(f, sw, L, a, lml, tuple(trace), jitter)


def _polish(K, t, a, f, steps: int = 3):
    """Full Newton steps kept only while the gradient t - sigma(f) - a shrinks.

    Near the mode the objective is flat to round-off, so objective changes can
    no longer certify progress; the gradient still can.
    """
    grad = np.abs(t - expit(f) - a).max()
    for _ in range(steps):
        if grad < 1e-13:
            break
        pi = expit(f)
        w = pi * (1.0 - pi)
        sw = np.sqrt(w)
        L = _factor(K, sw)
        b = w * f + (t - pi)
        a_new = b - sw * cho_solve((L, True), sw * (K @ b), check_finite=False)
        f_new = K @ a_new
        grad_new = np.abs(t - expit(f_new) - a_new).max()
        if not grad_new < grad:
            break
        a, f, grad = a_new, f_new, grad_new
    return a, f


def gh_sigmoid_gaussian(mean, var) -> np.ndarray:
    """E[sigma(f)] for f ~ N(mean, var) with 33-node Gauss-Hermite quadrature."""
    mean = np.asarray(mean, dtype=np.float64)
    var = np.maximum(np.asarray(var, dtype=np.float64), 0.0)
    f = mean[..., None] + np.sqrt(2.0 * var)[..., None] * _GH_NODES
    return expit(f) @ _GH_WEIGHTS / np.sqrt(np.pi)


def latent_predictive(state: LaplaceState, k_star: np.ndarray, k_diag: float, t: np.ndarray):
    """Predictive mean and variance of the latent function.

    ``k_star`` is n_train x m. Variances are clipped at 1e-12.
    """
    mean = k_star.T @ (t - expit(state.f_hat))
    v = solve_triangular(state.chol, state.sqrt_w[:, None] * k_star, lower=True, check_finite=False)
    var = k_diag - np.einsum("ij,ij->j", v, v)
    return mean, np.maximum(var, 1e-12)


@dataclass(frozen=True, eq=False)
class TrainedModel:
    kernel: Kernel
    label_order: tuple[str, ...]
    states: tuple[LaplaceState, ...]
    X_train: np.ndarray
    y_train: tuple[str, ...]
    norm_stats: dict = field(default_factory=dict)
    feature_layout: dict = field(default_factory=dict)
    jitter: float = DEFAULT_JITTER
    seed: int = 0

    @property
    def norm_hash(self) -> str:
        return stats_hash(self.norm_stats, self.feature_layout)

    @property
    def log_marginal_likelihood(self) -> float:
        return float(sum(s.log_marginal_likelihood for s in self.states))

    def _targets(self, j):
        return (np.asarray(self.y_train, dtype=object) == self.label_order[j]).astype(np.float64)

    def _check(self, X):
        if isinstance(X, FeatureMatrix):
            if self.norm_stats and X.norm_hash() != self.norm_hash:
                raise ValidationError("feature normalisation does not match the model (norm_stats hash mismatch)")
            X = X.values
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.X_train.shape[1]:
            raise ValidationError(f"expected {self.X_train.shape[1]} feature columns, got {X.shape[1]}")
        return X

    def predict_proba(self, X) -> np.ndarray:
        """m x |labels| class probabilities; rows sum to one."""
        X = self._check(X)
        return self.predict_proba_sqdist(sq_dists(self.X_train, X))

    def predict_proba_sqdist(self, d2_train_test: np.ndarray) -> np.ndarray:
        """Same as :meth:`predict_proba` from train x test squared distances."""
        k_star = self.kernel.from_sqdist(d2_train_test)
        k_diag = self.kernel.diag_value()
        cols = []
        for j, state in enumerate(self.states):
            mean, var = latent_predictive(state, k_star, k_diag, self._targets(j))
            cols.append(gh_sigmoid_gaussian(mean, var))
        probs = np.stack(cols, axis=1)
        return probs / probs.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        return self.labels_from_proba(self.predict_proba(X))

    def labels_from_proba(self, probs) -> np.ndarray:
        # argmax returns the first maximum, so ties go to the earlier label.
        return np.asarray(self.label_order, dtype=object)[np.argmax(probs, axis=1)]

    # -- serialisation -----------------------------------------------------------

    def to_bytes(self) -> bytes:
        header = json.dumps(
            {
                "version": MODEL_VERSION,
                "kernel": to_expression(self.kernel),
                "label_order": list(self.label_order),
                "y_train": list(self.y_train),
                "norm_stats": self.norm_stats,
                "feature_layout": self.feature_layout,
                "jitter": self.jitter,
                "seed": self.seed,
                "n_train": int(self.X_train.shape[0]),
                "n_features": int(self.X_train.shape[1]),
                "state_jitter": [s.jitter for s in self.states],
                "lml": [s.log_marginal_likelihood for s in self.states],
            },
            sort_keys=True,
        ).encode("utf-8")
        parts = [_MAGIC, struct.pack("<II", MODEL_VERSION, len(header)), header]
        parts.append(np.ascontiguousarray(self.X_train, dtype="<f8").tobytes())
        for s in self.states:
            for arr in (s.f_hat, s.sqrt_w, s.alpha, s.chol):
                parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "TrainedModel":
        if blob[:4] != _MAGIC:
            raise ValidationError("not a model file (bad magic)")
        version, hlen = struct.unpack("<II", blob[4:12])
        if version != MODEL_VERSION:
            raise ValidationError(f"unsupported model version {version}")
        header = json.loads(blob[12:12 + hlen].decode("utf-8"))
        pos = 12 + hlen
        n, d = header["n_train"], header["n_features"]

        def read(count, shape):
            nonlocal pos
            end = pos + 8 * count
            if end > len(blob):
                raise ValidationError("model file truncated")
            arr = np.frombuffer(blob[pos:end], dtype="<f8").astype(np.float64).reshape(shape)
            pos = end
            return arr

        X = read(n * d, (n, d))
        states = []
        for lml, jit in zip(header["lml"], header["state_jitter"]):
            f_hat, sw, alpha = read(n, (n,)), read(n, (n,)), read(n, (n,))
            chol = read(n * n, (n, n))
            states.append(LaplaceState(f_hat, sw, chol, alpha, lml, (), jit))
        return cls(
            parse_kernel(header["kernel"]), tuple(header["label_order"]), tuple(states), X,
            tuple(header["y_train"]), header["norm_stats"], header["feature_layout"],
            header["jitter"], header["seed"],
        )

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "TrainedModel":
        path = Path(path)
        if not path.is_file():
            raise ValidationError(f"model file not found: {path}")
        return cls.from_bytes(path.read_bytes())


def _fit_states(K, labels, label_order, jitter, threads=None):
    def one(label):
        y = np.where(labels == label, 1.0, -1.0)
        return laplace_fit_binary(K, y, jitter=jitter)

    return tuple(parallel_map(one, label_order, threads))


def fit(
    features: FeatureMatrix,
    kernel: Kernel,
    optimize_lml: bool = False,
    seed: int = 0,
    label_order=None,
    sqdist: np.ndarray | None = None,
    jitter: float = DEFAULT_JITTER,
    threads: int | None = None,
) -> TrainedModel:
    """One-vs-rest Laplace GPC on the rows of ``features``.

    ``sqdist`` may carry precomputed training squared distances. With
    ``optimize_lml`` the log-hyperparameters are hill-climbed on the summed
    per-label log marginal likelihood; ``seed`` is recorded for provenance.
    """
    labels = features.labels
    label_order = tuple(label_order) if label_order is not None else features.label_set
    present = {str(l) for l in labels}
    if len(label_order) < 2 or len(present) < 2:
        raise ValidationError("GPC needs at least two labels")
    missing = [l for l in label_order if l not in present]
    if missing:
        raise ValidationError(f"labels without training rows: {', '.join(missing)}")
    extra = present - set(label_order)
    if extra:
        raise ValidationError(f"training labels not in label_order: {', '.join(sorted(extra))}")
    d2 = sq_dists(features.values) if sqdist is None else sqdist
    if optimize_lml:
        kernel = optimize_hyperparameters(kernel, d2, labels, label_order, jitter, threads=threads)
    states = _fit_states(kernel.from_sqdist(d2), labels, label_order, jitter, threads)
    return TrainedModel(
        kernel, label_order, states, features.values, tuple(str(l) for l in labels),
        features.norm_stats, features.feature_layout, jitter, int(seed),
    )


def summed_lml(kernel: Kernel, d2, labels, label_order, jitter=DEFAULT_JITTER, threads=None) -> float:
    states = _fit_states(kernel.from_sqdist(d2), labels, label_order, jitter, threads)
    return float(sum(s.log_marginal_likelihood for s in states))


def optimize_hyperparameters(kernel, d2, labels, label_order, jitter=DEFAULT_JITTER,
                             max_iter: int = 50, fd_step: float = 1e-4, threads=None):
    """Gradient ascent in log-hyperparameter space with backtracking.

    Finite-difference gradients; a step is only taken if it increases the
    objective, so the result is never worse than the starting kernel.
    """
    theta = np.log(kernel.params())

    def score(th):
        try:
            return summed_lml(kernel.with_params(np.exp(th)), d2, labels, label_order, jitter, threads)
        except (NumericalError, ValidationError):
            return -np.inf

    best = score(theta)
    step = 1.0
    for _ in range(max_iter):
        grad = np.empty_like(theta)
        for i in range(len(theta)):
            e = np.zeros_like(theta)
            e[i] = fd_step
            grad[i] = (score(theta + e) - score(theta - e)) / (2 * fd_step)
        if not np.all(np.isfinite(grad)) or np.max(np.abs(grad)) < 1e-8:
            break
        direction = grad / np.linalg.norm(grad)
        improved = False
        while step > 1e-6:
            cand = np.clip(theta + step * direction, -20.0, 20.0)
            value = score(cand)
            if value > best:
                theta, best, improved = cand, value, True
                step *= 2.0
                break
            step *= 0.5
        if not improved:
            break
    return kernel.with_params(np.exp(theta))
