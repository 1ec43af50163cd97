"""Spectral measures for telling high-frequency fooling images from low-frequency ones."""

from __future__ import annotations

import numpy as np


def radial_index_frequency(h, w):
    """Radial frequency of each rfft2 bin in cycles per image."""
    ky = np.fft.fftfreq(h) * h
    kx = np.fft.rfftfreq(w) * w
    return np.sqrt(ky[:, None] ** 2 + kx[None, :] ** 2)


def high_freq_energy(image, cutoff=None):
    """Fraction of non-DC half-plane DFT power above ``cutoff`` (default max(H, W)/4).

    Averaged over channels; a channel with no non-DC power contributes 0.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[None]
    _, h, w = img.shape
    cutoff = max(h, w) / 4.0 if cutoff is None else cutoff
    power = np.abs(np.fft.rfft2(img)) ** 2
    f = radial_index_frequency(h, w)
    non_dc = f > 0
    high = f > cutoff
    ratios = []
    for p in power:
        total = p[non_dc].sum()
        ratios.append(p[high].sum() / total if total > 1e-20 else 0.0)
    return float(np.mean(ratios))


def radial_power_spectrum(image):
    """Mean power per integer radial frequency bin; returns (frequencies, power)."""
    img = np.asarray(image, dtype=np.float64)
    _, h, w = img.shape
    power = (np.abs(np.fft.rfft2(img)) ** 2).mean(axis=0)
    f = np.rint(radial_index_frequency(h, w)).astype(int)
    counts = np.bincount(f.ravel())
    sums = np.bincount(f.ravel(), weights=power.ravel())
    freqs = np.nonzero(counts)[0]
    return freqs, sums[freqs] / counts[freqs]
