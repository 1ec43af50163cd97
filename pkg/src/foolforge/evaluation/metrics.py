"""Attack metrics: targeted transfer rate, RMSD, RTD, and a targeted I-FGSM baseline."""

from __future__ import annotations

import numpy as np

from foolforge.autodiff import ops
from foolforge.autodiff.tensor import ShapeError, Tensor, grad
from foolforge.victims.zoo import Classifier, predict

PIXEL_SCALE = 255.0


def top1_labels(victim, images):
    """Top-1 labels from an in-process Classifier or any object exposing ``top1(images)``."""
    if isinstance(victim, Classifier):
        return predict(victim, images).argmax(axis=1)
    return np.asarray(victim.top1(images))


def transfer_success_rate(adv, victims, target):
    """Fraction of images each victim assigns to ``target`` (exact top-1 match)."""
    adv = np.asarray(adv)
    if not len(adv):
        raise ValueError("no images to evaluate")
    return [float((top1_labels(v, adv) == target).mean()) for v in victims]


def rmsd(adv, src, scale=PIXEL_SCALE):
    """Root mean square deviation, measured on a 0..scale pixel range."""
    a, s = np.asarray(adv, dtype=np.float64), np.asarray(src, dtype=np.float64)
    if a.shape != s.shape:
        raise ShapeError(f"rmsd: shapes differ {a.shape} vs {s.shape}")
    d = (a - s) * scale
    return float(np.sqrt(np.mean(d * d)))


def rtd(rate, distortion):
    """Transfer rate per unit distortion, times 100; None when distortion is zero."""
    if distortion < 0:
        raise ValueError("distortion must be non-negative")
    if distortion == 0:
        return None
    return rate / distortion * 100.0


def baseline_fgsm_targeted(victim, sources, target, epsilon, steps=10, step_size=None):
    """Iterative signed-gradient descent on cross-entropy toward ``target``.

    Every step is projected onto the L-infinity ball of radius ``epsilon`` around
    the source and onto [0, 1].
    """
    src = np.asarray(sources, dtype=np.float64)
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    alpha = step_size if step_size is not None else 1.25 * epsilon / max(steps, 1)
    lo, hi = np.clip(src - epsilon, 0.0, 1.0), np.clip(src + epsilon, 0.0, 1.0)
    x = src.copy()
    targets = np.full(len(src), target)
    for _ in range(steps if epsilon > 0 else 0):
        xt = Tensor(x, requires_grad=True)
        logits, _ = victim.forward(xt)
        (g,) = grad(ops.cross_entropy(logits, targets), [xt])
        x = np.clip(x - alpha * np.sign(g), lo, hi)
    return x
