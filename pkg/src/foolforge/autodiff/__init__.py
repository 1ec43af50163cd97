"""Minimal float64 reverse-mode automatic differentiation on numpy."""

from foolforge.autodiff import ops
from foolforge.autodiff.gradcheck import grad_check, numerical_grad, relative_error
from foolforge.autodiff.optim import OptimConfig, Optimizer, optimizer_step
from foolforge.autodiff.serialize import (
    ChecksumError,
    FormatError,
    load_bundle,
    load_tensor,
    save_bundle,
    save_tensor,
)
from foolforge.autodiff.spectral import SpectralParam, frequency_scale, spectral_preactivation, spectral_synthesize
from foolforge.autodiff.tensor import Graph, NonFiniteError, ShapeError, Tensor, backward, grad
from foolforge.autodiff.warp import AffineParams, affine_warp, bilinear_transform

__all__ = [
    "AffineParams",
    "ChecksumError",
    "FormatError",
    "Graph",
    "NonFiniteError",
    "OptimConfig",
    "Optimizer",
    "ShapeError",
    "SpectralParam",
    "Tensor",
    "affine_warp",
    "backward",
    "bilinear_transform",
    "frequency_scale",
    "grad",
    "grad_check",
    "load_bundle",
    "load_tensor",
    "numerical_grad",
    "ops",
    "optimizer_step",
    "relative_error",
    "save_bundle",
    "save_tensor",
    "spectral_preactivation",
    "spectral_synthesize",
]
