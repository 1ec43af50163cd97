"""Fourier-basis image parameterization.

An image is stored as half-plane real-FFT coefficients, scaled per
frequency by ``1/max(f, f_min)`` and mapped to [0, 1] with a sigmoid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from foolforge.autodiff import ops
from foolforge.autodiff.tensor import NonFiniteError, ShapeError, as_tensor, make_node


def half_plane_shape(h, w):
    return h, w // 2 + 1


def radial_frequency(h, w):
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.rfftfreq(w)[None, :]
    return np.sqrt(fy * fy + fx * fx)


def frequency_scale(h, w):
    f_min = 1.0 / max(h, w)
    return 1.0 / np.maximum(radial_frequency(h, w), f_min)


@dataclass
class SpectralParam:
    """Half-plane coefficients ``coeffs[..., C, H, W//2+1, 2]`` (real, imag)."""

    coeffs: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        self.scale = np.asarray(self.scale, dtype=np.float64)
        if self.coeffs.shape[-1] != 2 or self.coeffs.shape[-3:-1] != self.scale.shape:
            raise ShapeError(f"coefficients {self.coeffs.shape} do not match scale table {self.scale.shape}")
        if not (self.scale > 0).all():
            raise ValueError("frequency scale entries must be strictly positive")

    @classmethod
    def zeros(cls, shape):
        c, h, w = shape
        return cls(np.zeros((c, *half_plane_shape(h, w), 2)), frequency_scale(h, w))

    @classmethod
    def random(cls, shape, rng, std=0.01, batch=None):
        c, h, w = shape
        lead = (c,) if batch is None else (batch, c)
        return cls(rng.normal(0.0, std, (*lead, *half_plane_shape(h, w), 2)), frequency_scale(h, w))


def spectral_preactivation(theta, scale, hw):
    """Inverse real 2-D FFT (orthonormal) of ``theta * scale``; linear in theta."""
    theta = as_tensor(theta)
    h, w = hw
    if theta.shape[-3:] != (*half_plane_shape(h, w), 2):
        raise ShapeError(f"coefficients {theta.shape} do not fit a {h}x{w} half-plane layout")
    if not np.isfinite(theta.data).all():
        raise NonFiniteError("spectral coefficients contain non-finite values")
    spec = (theta.data[..., 0] + 1j * theta.data[..., 1]) * scale
    out = np.fft.irfft2(spec, s=(h, w), norm="ortho")
    # columns other than DC and Nyquist appear twice in the full spectrum
    dup = np.full(half_plane_shape(h, w)[1], 2.0)
    dup[0] = 1.0
    if w % 2 == 0:
        dup[-1] = 1.0

    def bw(g):
        gz = np.fft.rfft2(g, norm="ortho") * dup * scale
        return (np.stack([gz.real, gz.imag], axis=-1),)

    return make_node(out, (theta,), bw, "spectral_preactivation")


def spectral_synthesize(p, out_shape):
    """Render a SpectralParam (or raw coefficient tensor paired with ``p.scale``) to [0, 1]."""
    theta = p.coeffs if isinstance(p, SpectralParam) else p
    c, h, w = out_shape
    theta = as_tensor(theta)
    if theta.shape[-4] != c:
        raise ShapeError(f"coefficients {theta.shape} do not provide {c} channels")
    return ops.sigmoid(spectral_preactivation(theta, frequency_scale(h, w), (h, w)))
