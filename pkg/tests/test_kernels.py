import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import cholesky

from acrosense.errors import ValidationError
from acrosense.kernels import (
    RBF, Constant, Matern, Product, RationalQuadratic, Sum, kernel_eval, parse_kernel, sq_dists, to_expression,
)


def test_constant_times_rq_at_zero_distance():
    k = Constant(925.599) * RationalQuadratic(22.788, 23618.3)
    X = np.random.default_rng(0).normal(size=(4, 6))
    np.testing.assert_allclose(np.diag(kernel_eval(k, X)), 925.599, rtol=1e-15)
    assert k.diag_value() == pytest.approx(925.599, rel=1e-15)


def test_rq_half_point():
    ell = 2.5
    X = np.array([[0.0, 0.0]])
    Z = np.array([[ell * math.sqrt(2.0), 0.0]])
    assert RationalQuadratic(ell, 1.0)(X, Z)[0, 0] == pytest.approx(0.5, abs=1e-14)


def test_rq_large_alpha_matches_rbf():
    d = np.random.default_rng(1).uniform(0, 5, size=100)
    rq = RationalQuadratic(1.0, 1e6).from_sqdist(d**2)
    rbf = np.exp(-(d**2) / 2)
    assert np.max(np.abs(rq - rbf)) < 1e-4


def test_closed_forms():
    d = np.linspace(0, 4, 9)
    r = d / 1.3
    np.testing.assert_allclose(RBF(1.3).from_sqdist(d**2), np.exp(-0.5 * r**2))
    np.testing.assert_allclose(Matern(1.3, 0.5).from_sqdist(d**2), np.exp(-r))
    np.testing.assert_allclose(Matern(1.3, 1.5).from_sqdist(d**2), (1 + math.sqrt(3) * r) * np.exp(-math.sqrt(3) * r))
    s = math.sqrt(5) * r
    np.testing.assert_allclose(Matern(1.3, 2.5).from_sqdist(d**2), (1 + s + s * s / 3) * np.exp(-s))
    np.testing.assert_allclose(RationalQuadratic(1.3, 2.0).from_sqdist(d**2), (1 + d**2 / (2 * 2.0 * 1.3**2)) ** -2.0)


def test_sum_and_product_elementwise():
    X = np.random.default_rng(2).normal(size=(5, 3))
    a, b = RBF(0.7), Matern(2.0, 2.5)
    np.testing.assert_allclose((a + b)(X), a(X) + b(X))
    np.testing.assert_allclose((a * b)(X), a(X) * b(X))


def test_sq_dists_matches_direct():
    rng = np.random.default_rng(3)
    X, Z = rng.normal(size=(6, 4)), rng.normal(size=(3, 4))
    direct = ((X[:, None, :] - Z[None, :, :]) ** 2).sum(-1)
    np.testing.assert_allclose(sq_dists(X, Z), direct, atol=1e-12)
    with pytest.raises(ValidationError):
        sq_dists(X, rng.normal(size=(2, 5)))


KERNELS = [
    Constant(3.0) * RationalQuadratic(0.8, 2.0),
    Constant(2.0) * RBF(1.5),
    Constant(1.0) * Matern(0.5, 1.5),
    Constant(0.5) + RationalQuadratic(2.0, 0.3),
    Constant(4.0) + RBF(0.3),
    Constant(1.0) + Matern(1.0, 0.5),
]


def test_psd_and_symmetric():
    rng = np.random.default_rng(4)
    for trial in range(100):
        n = int(rng.integers(2, 31))
        X = rng.normal(size=(n, int(rng.integers(1, 6))))
        K = KERNELS[trial % len(KERNELS)](X)
        assert np.max(np.abs(K - K.T)) <= 1e-12
        # Duplicated rows make K exactly singular; the jitter must still be enough.
        X2 = np.vstack([X, X[:1]])
        K2 = KERNELS[trial % len(KERNELS)](X2)
        cholesky(K2 + 1e-10 * np.eye(n + 1) * max(1.0, K2.max()), lower=True)
        assert np.linalg.eigvalsh(K).min() >= -1e-9 * K.max()


def test_hyperparameter_validation():
    for bad in (0.0, -1.0, float("inf"), float("nan")):
        with pytest.raises(ValidationError):
            RBF(bad)
    with pytest.raises(ValidationError):
        Matern(1.0, 2.0)
    with pytest.raises(ValidationError):
        RationalQuadratic(1.0, 0.0)


def test_params_round_trip():
    k = Constant(2.0) * RationalQuadratic(3.0, 4.0) + Matern(5.0, 0.5)
    assert k.params() == [2.0, 3.0, 4.0, 5.0]
    assert k.param_names() == ["c", "l", "a", "l"]
    assert k.with_params([7.0, 8.0, 9.0, 10.0]).params() == [7.0, 8.0, 9.0, 10.0]
    with pytest.raises(ValidationError):
        k.with_params([1.0] * 5)


def test_parse_precedence_and_aliases():
    k = parse_kernel("C(2) + RBF(l=1) * RQ(length_scale=3, alpha=4)")
    assert k == Sum(Constant(2.0), Product(RBF(1.0), RationalQuadratic(3.0, 4.0)))
    k = parse_kernel("(C(2)+RBF(l=1))*M(l=0.5,nu=2.5)")
    assert k == Product(Sum(Constant(2.0), RBF(1.0)), Matern(0.5, 2.5))
    assert parse_kernel("c(1e3)*rq(l=5e1,a=50)") == Product(Constant(1000.0), RationalQuadratic(50.0, 50.0))


def test_print_kernel():
    k = Constant(925.599) * RationalQuadratic(22.788, 23618.3)
    assert to_expression(k) == "C(925.599)*RQ(l=22.788,a=23618.3)"
    assert str(parse_kernel(str(k))) == str(k)


@pytest.mark.parametrize("text", [
    "", "C(", "C(1))", "RBF()", "RBF(l=1, l=2)", "M(l=1,nu=3)", "FOO(1)", "C(1)+", "C(1) RBF(l=1)",
    "RQ(l=1)", "C(-1)", "C(1)#",
])
def test_parse_errors(text):
    with pytest.raises(ValidationError):
        parse_kernel(text)


positive = st.floats(1e-3, 1e5, allow_nan=False)
leaf = st.one_of(
    positive.map(Constant),
    positive.map(RBF),
    st.tuples(positive, st.sampled_from([0.5, 1.5, 2.5])).map(lambda p: Matern(*p)),
    st.tuples(positive, positive).map(lambda p: RationalQuadratic(*p)),
)
trees = st.recursive(leaf, lambda kids: st.one_of(
    st.tuples(kids, kids).map(lambda p: Sum(*p)), st.tuples(kids, kids).map(lambda p: Product(*p))), max_leaves=6)


@given(trees)
@settings(max_examples=200, deadline=None)
def test_expression_round_trip(k):
    assert parse_kernel(to_expression(k)) == k
