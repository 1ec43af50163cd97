"""Representation bank: victim activations of sampled fooling images."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from foolforge.autodiff import ops
from foolforge.autodiff.tensor import Tensor
from foolforge.victims.zoo import representation_taps


@dataclass
class RepresentationBank:
    features: np.ndarray  # [N, d], taps concatenated in order
    taps: tuple
    tap_shapes: dict  # tap -> (c, h, w)
    target: int
    source_ids: list = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        width = sum(int(np.prod(self.tap_shapes[t])) for t in self.taps)
        if self.features.ndim != 2 or self.features.shape[1] != width:
            raise ValueError(f"bank features {self.features.shape} do not match tap widths (total {width})")
        if not np.isfinite(self.features).all():
            raise ValueError("bank features must be finite")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def width(self):
        return self.features.shape[1]

    def statistics(self):
        """Per-feature mean and (biased) variance across the N rows, concatenated."""
        return np.concatenate([self.features.mean(axis=0), self.features.var(axis=0)])

    def fingerprint(self):
        h = hashlib.sha256(np.ascontiguousarray(self.features, dtype="<f8").tobytes())
        h.update(",".join(self.taps).encode())
        return h.hexdigest()[:16]


def flatten_taps(acts, taps):
    """{tap: Tensor[N,c,h,w]} -> Tensor[N, sum(c*h*w)] in tap order."""
    parts = [ops.reshape(acts[t], (acts[t].shape[0], -1)) for t in taps]
    return parts[0] if len(parts) == 1 else ops.concat(parts, axis=1)


def build_representation_bank(victim, fooling, taps=None):
    if not fooling:
        raise ValueError("need at least one fooling image")
    targets = {f.target for f in fooling}
    if len(targets) != 1:
        raise ValueError(f"fooling images mix target classes {sorted(targets)}")
    taps = tuple(taps) if taps else representation_taps(victim.spec)
    images = np.stack([f.image for f in fooling])
    _, acts = victim.forward(Tensor(images), taps)
    feats = flatten_taps(acts, taps).data
    shapes = {t: tuple(int(s) for s in acts[t].shape[1:]) for t in taps}
    ids = [f"{f.method}:{f.seed}:{i}" for i, f in enumerate(fooling)]
    return RepresentationBank(feats, taps, shapes, targets.pop(), ids)
