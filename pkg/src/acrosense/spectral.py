"""Power spectra through the autocorrelation function (Wiener-Khinchin).

The FFT here is a self-contained radix-2 implementation; arbitrary-length
transforms go through Bluestein's chirp-z trick on top of it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CHANNELS, Corpus, channel_indices
from .errors import ValidationError
from .preprocess import FeatureMatrix, assemble, resample_linear

_BASE = 16


@dataclass(frozen=True)
class SpectrumConfig:
    bins: int = 1000
    detrend: str = "mean_removal"
    autocorrelation: str = "biased_linear"
    normalization: str = "per_channel_zscore"
    channels: tuple[str, ...] = CHANNELS

    def __post_init__(self):
        if int(self.bins) < 2:
            raise ValidationError("bins must be >= 2")
        if self.detrend not in ("mean_removal", "none"):
            raise ValidationError(f"unknown detrend {self.detrend!r}")
        if self.autocorrelation != "biased_linear":
            raise ValidationError(f"unsupported autocorrelation estimator {self.autocorrelation!r}")
        if self.normalization not in ("per_channel_zscore", "none"):
            raise ValidationError(f"unknown normalization {self.normalization!r}")
        channel_indices(self.channels)


def next_pow2(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


def fft(signal, inverse: bool = False) -> np.ndarray:
    """Radix-2 decimation-in-time FFT along the last axis.

    Forward: X[k] = sum_t x[t] exp(-2 pi i k t / N). Inverse carries the 1/N.
    The length must be a power of two; leading axes are treated as a batch.
    """
    x = np.asarray(signal, dtype=np.complex128)
    n = x.shape[-1]
    if n < 1 or n & (n - 1):
        raise ValidationError(f"fft length must be a power of two, got {n}")
    if inverse:
        return np.conj(_fft_pow2(np.conj(x))) / n
    return _fft_pow2(x)


def _fft_pow2(x: np.ndarray) -> np.ndarray:
    lead = x.shape[:-1]
    n = x.shape[-1]
    x = x.reshape(-1, n)
    m = min(n, _BASE)
    # Dense DFTs over the m interleaved sub-sequences x[j::n//m], then
    # log2(n/m) butterfly stages.
    k = np.arange(m)
    dft = np.exp(-2j * np.pi * np.outer(k, k) / m)
    out = np.einsum("kr,brj->bkj", dft, x.reshape(x.shape[0], m, n // m))
    while out.shape[1] < n:
        half = out.shape[2] // 2
        even, odd = out[:, :, :half], out[:, :, half:]
        size = out.shape[1]
        twiddle = np.exp(-1j * np.pi * np.arange(size) / size)[None, :, None]
        out = np.concatenate([even + twiddle * odd, even - twiddle * odd], axis=1)
    return out.reshape(*lead, n)


def dft(signal) -> np.ndarray:
    """Length-T DFT for any T (last axis) via Bluestein's algorithm."""
    x = np.asarray(signal, dtype=np.complex128)
    t = x.shape[-1]
    if t & (t - 1) == 0:
        return fft(x)
    idx = np.arange(t)
    # n^2 mod 2T keeps the chirp phase exact for long inputs.
    chirp = np.exp(-1j * np.pi * ((idx * idx) % (2 * t)) / t)
    size = next_pow2(2 * t - 1)
    a = np.zeros(x.shape[:-1] + (size,), dtype=np.complex128)
    a[..., :t] = x * chirp
    b = np.zeros(size, dtype=np.complex128)
    b[:t] = np.conj(chirp)
    b[size - t + 1:] = np.conj(chirp[1:])[::-1]
    conv = fft(fft(a) * fft(b), inverse=True)
    return conv[..., :t] * chirp


def autocorrelation(signal, detrend: str = "mean_removal") -> np.ndarray:
    """Biased linear autocorrelation r[tau] = (1/T) sum_t x[t] x[t+tau], tau = 0..T-1.

    Works on the last axis; the signal is zero-padded to a power of two
    >= 2T-1 so the FFT route yields linear rather than circular lags.
    """
    x = np.asarray(signal, dtype=np.float64)
    t = x.shape[-1]
    if t < 2:
        raise ValidationError("autocorrelation needs at least 2 samples")
    if detrend == "mean_removal":
        x = x - x.mean(axis=-1, keepdims=True)
    n = next_pow2(2 * t - 1)
    padded = np.zeros(x.shape[:-1] + (n,))
    padded[..., :t] = x
    spec = fft(padded)
    r = fft(spec.real ** 2 + spec.imag ** 2, inverse=True).real
    return r[..., :t] / t


def power_spectrum(channel, cfg: SpectrumConfig | None = None) -> np.ndarray:
    """Power spectrum at frequencies k/T, k = 0..floor(T/2).

    The spectrum is the Fourier transform of the two-sided biased
    autocorrelation (lags -(T-1)..T-1), evaluated on the length-T frequency
    grid. Negative-lag terms fold onto the circular index T-tau, which turns
    the transform into a length-T DFT. Tiny negative round-off is clipped to 0.
    Accepts a batch along leading axes.
    """
    cfg = cfg or SpectrumConfig()
    r = autocorrelation(channel, cfg.detrend)
    t = r.shape[-1]
    folded = r.copy()
    folded[..., 1:] += r[..., :0:-1]
    spec = dft(folded).real[..., : t // 2 + 1]
    if np.any(spec < -1e-9 * max(1.0, float(np.max(np.abs(spec), initial=0.0)))):
        raise ValidationError("power spectrum has significantly negative bins")
    return np.clip(spec, 0.0, None)


def periodogram(channel, detrend: str = "mean_removal") -> np.ndarray:
    """|DFT(x)|^2 / T on the same bins as :func:`power_spectrum`."""
    x = np.asarray(channel, dtype=np.float64)
    if detrend == "mean_removal":
        x = x - x.mean(axis=-1, keepdims=True)
    t = x.shape[-1]
    spec = dft(x)
    return (np.abs(spec) ** 2 / t)[..., : t // 2 + 1]


def build_spectra_features(corpus: Corpus, cfg: SpectrumConfig, fit_rows) -> FeatureMatrix:
    """Per channel: spectrum of the original-length signal, resampled to
    ``cfg.bins`` points, then standardised on the fit rows."""
    idx = list(channel_indices(cfg.channels))
    names = [CHANNELS[i] for i in idx]
    rows = []
    for rec in corpus:
        spectra = power_spectrum(rec.channels[idx], cfg)
        rows.append(np.stack([resample_linear(s, cfg.bins) for s in spectra]))
    blocks = np.stack(rows)
    layout = {"kind": "spectra", "bins": int(cfg.bins), "detrend": cfg.detrend}
    return assemble(corpus, blocks, names, fit_rows, cfg.normalization, layout)
