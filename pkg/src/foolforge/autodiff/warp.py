"""Differentiable affine warps (rotate / scale / jitter) with bilinear sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from foolforge.autodiff import ops
from foolforge.autodiff.tensor import ShapeError, as_tensor, make_node


@dataclass(frozen=True)
class AffineParams:
    rotation: float = 0.0  # radians
    scale: float = 1.0
    jitter: tuple = (0.0, 0.0)  # (dx, dy) in pixels

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    @classmethod
    def sample(cls, rng, rotation_deg=5.0, scale_range=(0.9, 1.1), jitter_px=2.0):
        rot = np.deg2rad(rng.uniform(-rotation_deg, rotation_deg)) if rotation_deg else 0.0
        lo, hi = scale_range
        scale = rng.uniform(lo, hi) if hi > lo else lo
        if jitter_px:
            jitter = tuple(rng.uniform(-jitter_px, jitter_px, size=2))
        else:
            jitter = (0.0, 0.0)
        return cls(float(rot), float(scale), (float(jitter[0]), float(jitter[1])))

    @property
    def is_identity(self):
        return self.rotation == 0.0 and self.scale == 1.0 and tuple(self.jitter) == (0.0, 0.0)


def sampling_matrix(t, h, w):
    """Sparse [H*W, H*W] matrix mapping a flattened source plane to the warped plane.

    Inverse warp about the image centre; out-of-range samples are clamped to
    the border (edge padding).
    """
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rows, cols = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float), indexing="ij")
    px = cols - cx - t.jitter[0]
    py = rows - cy - t.jitter[1]
    cos, sin = np.cos(t.rotation), np.sin(t.rotation)
    sx = (cos * px + sin * py) / t.scale + cx
    sy = (-sin * px + cos * py) / t.scale + cy
    sx = np.clip(sx, 0, w - 1).ravel()
    sy = np.clip(sy, 0, h - 1).ravel()
    x0 = np.floor(sx).astype(int)
    y0 = np.floor(sy).astype(int)
    fx, fy = sx - x0, sy - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    out_idx = np.arange(h * w)
    r = np.concatenate([out_idx] * 4)
    c = np.concatenate([y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1])
    v = np.concatenate([(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy])
    keep = v != 0
    return sp.csr_matrix((v[keep], (r[keep], c[keep])), shape=(h * w, h * w))


def affine_warp(x, params):
    """Warp x [N,C,H,W] with one AffineParams per sample (or one for the whole batch)."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"affine_warp expects [N,C,H,W], got {x.shape}")
    n, c, h, w = x.shape
    if isinstance(params, AffineParams):
        params = [params] * n
    if len(params) != n:
        raise ShapeError(f"affine_warp: {len(params)} transforms for batch of {n}")
    mats = [sampling_matrix(t, h, w) for t in params]
    flat = x.data.reshape(n, c, h * w)
    out = np.stack([(m @ flat[i].T).T for i, m in enumerate(mats)]).reshape(x.shape)

    def bw(g):
        gf = g.reshape(n, c, h * w)
        return (np.stack([(m.T @ gf[i].T).T for i, m in enumerate(mats)]).reshape(x.shape),)

    return make_node(out, (x,), bw, "affine_warp")


def bilinear_transform(image, t):
    """Warp a single image [C,H,W]."""
    image = as_tensor(image)
    if image.ndim != 3:
        raise ShapeError(f"bilinear_transform expects [C,H,W], got {image.shape}")
    return ops.reshape(affine_warp(ops.reshape(image, (1, *image.shape)), [t]), image.shape)
