"""
Power spectra from the autocorrelation
======================================

A recording's power spectrum is computed by Fourier transforming its
autocorrelation. This demo checks that route against the direct
periodogram and shows where a pure tone lands.
"""

import numpy as np

from acrosense.spectral import autocorrelation, periodogram, power_spectrum

# A 3 Hz tone sampled at 120 Hz for 2 s, plus a little noise
rate = 120.0
t = np.arange(240) / rate
x = np.sin(2 * np.pi * 3.0 * t) + 0.1 * np.random.default_rng(0).normal(size=t.size)

r = autocorrelation(x)
print("lag-0 autocorrelation equals the variance:", np.isclose(r[0], x.var()))

# Bin k sits at k / T cycles per sample, i.e. k * rate / T Hz
p = power_spectrum(x)
freqs = np.arange(p.size) * rate / x.size
print("peak at %.2f Hz" % freqs[np.argmax(p)])

# Wiener-Khinchin: same numbers as |DFT|^2 / T
print("max difference to the periodogram: %.2e" % np.max(np.abs(p - periodogram(x))))
