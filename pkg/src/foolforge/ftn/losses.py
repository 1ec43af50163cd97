"""Training losses for the transfer network: SSIM content, linear MMD, TV."""

from __future__ import annotations

import numpy as np

from foolforge.autodiff import ops
from foolforge.autodiff.tensor import ShapeError, as_tensor

SSIM_WINDOW = 8
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


def ssim_map(a, b, window=SSIM_WINDOW):
    """Per-window SSIM for images in [0, 1] ([N,C,H,W]); uniform window, valid positions."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"ssim: shapes differ {a.shape} vs {b.shape}")
    mu_a = ops.avg_pool2d(a, window)
    mu_b = ops.avg_pool2d(b, window)
    var_a = ops.avg_pool2d(a * a, window) - mu_a * mu_a
    var_b = ops.avg_pool2d(b * b, window) - mu_b * mu_b
    cov = ops.avg_pool2d(a * b, window) - mu_a * mu_b
    num = (mu_a * mu_b * 2.0 + SSIM_C1) * (cov * 2.0 + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return num / den


def ssim(a, b, window=SSIM_WINDOW):
    return ops.mean(ssim_map(a, b, window))


def loss_content(adv, src):
    return 1.0 - ssim(adv, src)


def loss_mmd(phi_adv, phi_bank):
    """Squared distance between the feature means of two equally sized sets."""
    phi_adv, phi_bank = as_tensor(phi_adv), as_tensor(phi_bank)
    if phi_adv.ndim != 2 or phi_bank.ndim != 2 or phi_adv.shape[1] != phi_bank.shape[1]:
        raise ShapeError(f"loss_mmd: feature widths differ {phi_adv.shape} vs {phi_bank.shape}")
    if phi_adv.shape[0] != phi_bank.shape[0]:
        raise ShapeError(f"loss_mmd: set sizes must match, got {phi_adv.shape[0]} and {phi_bank.shape[0]}")
    diff = ops.mean(phi_bank, axis=0) - ops.mean(phi_adv, axis=0)
    return ops.sum(diff * diff)


def mmd_matrix(n_bank, n_adv):
    """Linear-kernel MMD weights for rows stacked as [bank; adv]."""
    n = n_bank + n_adv
    m = np.full((n, n), -1.0 / (n_bank * n_adv))
    m[:n_bank, :n_bank] = 1.0 / n_bank**2
    m[n_bank:, n_bank:] = 1.0 / n_adv**2
    return m


def mmd_trace(phi_adv, phi_bank):
    """Trace form tr(phi^T M phi) of the same quantity (numpy, for cross-checking)."""
    phi = np.concatenate([np.asarray(phi_bank), np.asarray(phi_adv)])
    m = mmd_matrix(len(phi_bank), len(phi_adv))
    return float(np.trace(phi.T @ m @ phi))


def loss_tv(x):
    """Mean of squared neighbour differences, pooled over vertical and horizontal pairs."""
    x = as_tensor(x)
    dv = x[:, :, 1:, :] - x[:, :, :-1, :]
    dh = x[:, :, :, 1:] - x[:, :, :, :-1]
    count = dv.size + dh.size
    if count == 0:
        return ops.sum(x * 0.0)
    return (ops.sum(dv * dv) + ops.sum(dh * dh)) / float(count)


def combine(l_content, l_rep, l_tv, gamma, lam):
    return l_content + gamma * l_rep + lam * l_tv


def loss_total(adv, src, phi_adv, phi_bank, gamma, lam):
    if gamma < 0 or lam < 0:
        raise ValueError("loss weights must be non-negative")
    return combine(loss_content(adv, src), loss_mmd(phi_adv, phi_bank), loss_tv(adv), gamma, lam)
