import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from acrosense.data import Corpus, Recording
from acrosense.errors import ValidationError
from acrosense.spectral import (
    SpectrumConfig, autocorrelation, build_spectra_features, dft, fft, next_pow2, periodogram, power_spectrum,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def naive_dft(x):
    n = len(x)
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) @ np.asarray(x, dtype=complex)


def naive_autocorr(x):
    x = np.asarray(x, float) - np.mean(x)
    t = len(x)
    return np.array([np.dot(x[: t - m], x[m:]) / t for m in range(t)])


def naive_spectrum(x):
    """Two-sided autocorrelation summed directly against cosines at k/T."""
    r = naive_autocorr(x)
    t = len(x)
    lags = np.arange(1, t)
    out = []
    for k in range(t // 2 + 1):
        out.append(r[0] + 2 * np.sum(r[1:] * np.cos(2 * np.pi * k * lags / t)))
    return np.array(out)


@pytest.mark.parametrize("n", [1, 2, 4, 8, 16, 32, 64, 512])
def test_fft_matches_naive(n):
    rng = np.random.default_rng(n)
    x = rng.normal(size=n) + 1j * rng.normal(size=n)
    np.testing.assert_allclose(fft(x), naive_dft(x), atol=1e-9 * n)
    np.testing.assert_allclose(fft(fft(x), inverse=True), x, atol=1e-12)


@pytest.mark.parametrize("n", [3, 5, 7, 12, 100, 137, 898])
def test_dft_any_length(n):
    x = np.random.default_rng(n).normal(size=n)
    np.testing.assert_allclose(dft(x), naive_dft(x), atol=1e-9 * n)


def test_fft_rejects_non_power_of_two():
    with pytest.raises(ValidationError):
        fft(np.ones(6))


def test_next_pow2():
    assert [next_pow2(n) for n in (1, 2, 3, 5, 1023, 1024, 1025)] == [1, 2, 4, 8, 1024, 1024, 2048]


def test_impulse_and_dc():
    x = np.zeros(16)
    x[0] = 1
    np.testing.assert_allclose(fft(x), np.ones(16), atol=1e-15)
    np.testing.assert_allclose(fft(np.ones(16)), np.r_[16, np.zeros(15)], atol=1e-12)
    # A constant channel has zero power everywhere after mean removal.
    assert np.all(power_spectrum(np.full(40, 3.7)) == 0)


@given(arrays(np.float64, st.integers(1, 9).map(lambda e: 2**e), elements=finite))
@settings(max_examples=60, deadline=None)
def test_parseval(x):
    X = fft(x)
    assert np.isclose(np.sum(np.abs(X) ** 2) / len(x), np.sum(x**2), rtol=1e-9, atol=1e-6)


def test_autocorrelation_matches_direct_sum():
    x = np.random.default_rng(4).normal(size=77)
    np.testing.assert_allclose(autocorrelation(x), naive_autocorr(x), atol=1e-12)


def test_spectrum_matches_cosine_sum():
    x = np.random.default_rng(5).normal(size=61)
    np.testing.assert_allclose(power_spectrum(x), naive_spectrum(x), atol=1e-9)


def test_wiener_khinchin_on_many_signals():
    rng = np.random.default_rng(6)
    worst = 0.0
    for i in range(200):
        x = rng.normal(size=rng.integers(8, 600))
        p = power_spectrum(x)
        q = periodogram(x)
        worst = max(worst, np.max(np.abs(p - q)) / max(1.0, np.max(q)))
    assert worst < 1e-9


def test_sinusoid_peak_bin():
    t = np.arange(256)
    p = power_spectrum(np.sin(2 * np.pi * 8 * t / 256))
    assert np.argmax(p) == 8
    assert p.shape == (129,)


@given(arrays(np.float64, st.integers(4, 120), elements=finite), st.floats(-100, 100))
@settings(max_examples=60, deadline=None)
def test_offset_invariance_and_nonnegativity(x, c):
    p = power_spectrum(x)
    assert np.all(p >= 0)
    np.testing.assert_allclose(power_spectrum(x + c), p, atol=1e-7 * max(1.0, np.max(p), c * c))


def test_scaling_is_quadratic():
    x = np.random.default_rng(7).normal(size=90)
    np.testing.assert_allclose(power_spectrum(3 * x), 9 * power_spectrum(x), rtol=1e-10, atol=1e-12)


def test_circular_shift_invariance():
    x = np.random.default_rng(8).normal(size=64)
    np.testing.assert_allclose(power_spectrum(np.roll(x, 13)), power_spectrum(x), atol=1e-10)


def test_batch_equals_loop():
    x = np.random.default_rng(9).normal(size=(4, 50))
    batch = power_spectrum(x)
    for row, b in zip(x, batch):
        np.testing.assert_allclose(power_spectrum(row), b, atol=1e-12)


def test_config_validation():
    with pytest.raises(ValidationError):
        SpectrumConfig(bins=1)
    with pytest.raises(ValidationError):
        SpectrumConfig(detrend="linear")
    with pytest.raises(ValidationError):
        SpectrumConfig(autocorrelation="circular")


def test_feature_width_and_speed(small_corpus):
    start = time.perf_counter()
    fm = build_spectra_features(small_corpus, SpectrumConfig(), small_corpus.ids)
    elapsed = time.perf_counter() - start
    assert fm.shape == (len(small_corpus), 9000)
    assert fm.feature_layout["kind"] == "spectra"
    assert elapsed < 10


def test_planted_frequency_shows_up_in_its_block():
    rng = np.random.default_rng(10)
    recs = []
    for i in range(40):
        label = "AB"[i % 2]
        ch = rng.normal(size=(9, 200))
        if label == "B":
            ch[3] += 3 * np.sin(2 * np.pi * 20 * np.arange(200) / 200)
        recs.append(Recording(f"r{i:02d}", f"A{i % 4}", label, 100.0, ch))
    fm = build_spectra_features(Corpus(tuple(recs)), SpectrumConfig(bins=101), [r.id for r in recs])
    b = np.array(fm.labels) == "B"
    gap = np.abs(fm.values[b].mean(0) - fm.values[~b].mean(0))
    per_block = [gap[s].max() for s in fm.channel_slices()]
    assert int(np.argmax(per_block)) == 3
    block = gap[fm.channel_slices()[3]]
    assert int(np.argmax(block)) == 20
