"""Compositional pattern producing networks: (x, y, r) -> RGB."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from foolforge.autodiff import ops
from foolforge.autodiff.tensor import Tensor

ACTIVATIONS = {
    "sin": ops.sin,
    "tanh": ops.tanh,
    "sigmoid": ops.sigmoid,
    "gauss": ops.gauss,
}
INPUT_WIDTH = 3
OUTPUT_WIDTH = 3


def coordinate_map(h, w):
    """Pixel-centre coordinates in [-1, 1] plus radius, shape [H*W, 3]."""
    ys = (np.arange(h) + 0.5) / h * 2.0 - 1.0
    xs = (np.arange(w) + 0.5) / w * 2.0 - 1.0
    y, x = np.meshgrid(ys, xs, indexing="ij")
    r = np.sqrt(x * x + y * y)
    return np.stack([x.ravel(), y.ravel(), r.ravel()], axis=1)


@dataclass
class CPPNGenome:
    weights: list  # [in, out] per layer, last layer maps to RGB
    biases: list
    activations: tuple  # one tag per hidden layer; output is always sigmoid

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        if len(self.activations) != len(self.weights) - 1:
            raise ValueError("need one activation tag per hidden layer")
        if self.weights[0].shape[0] != INPUT_WIDTH or self.weights[-1].shape[1] != OUTPUT_WIDTH:
            raise ValueError("CPPN must map 3 inputs (x, y, r) to 3 outputs (RGB)")
        for a, b in zip(self.weights[:-1], self.weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise ValueError(f"layer widths do not chain: {a.shape} -> {b.shape}")
        for tag in self.activations:
            if tag not in ACTIVATIONS:
                raise ValueError(f"unknown activation {tag!r}")
        if not all(np.isfinite(w).all() for w in self.weights + self.biases):
            raise ValueError("CPPN weights must be finite")

    @property
    def widths(self):
        return [INPUT_WIDTH] + [w.shape[1] for w in self.weights]

    @classmethod
    def random(cls, rng, hidden=(16, 16, 16), activations=None, input_std=2.0, gain=2.0):
        if activations is None:
            activations = tuple("sin" if i % 2 == 0 else "tanh" for i in range(len(hidden)))
        widths = [INPUT_WIDTH, *hidden, OUTPUT_WIDTH]
        weights, biases = [], []
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            # gain > 1 keeps contrast from collapsing through the bounded activations
            std = input_std if i == 0 else gain / np.sqrt(a)
            weights.append(rng.normal(0.0, std, (a, b)))
            biases.append(np.zeros(b) if i else rng.normal(0.0, 0.5, b))
        return cls(weights, biases, tuple(activations))

    @classmethod
    def zeros(cls, hidden=(16, 16, 16), activations=None):
        g = cls.random(np.random.default_rng(0), hidden, activations)
        return cls([np.zeros_like(w) for w in g.weights], [np.zeros_like(b) for b in g.biases], g.activations)

    def copy(self):
        return CPPNGenome([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.activations)

    def mutate(self, rng, sigma, structural_prob=0.0):
        """Gaussian weight perturbation; occasionally a neutral extra hidden unit."""
        child = CPPNGenome(
            [w + rng.normal(0.0, 1.0, w.shape) * sigma for w in self.weights],
            [b + rng.normal(0.0, 1.0, b.shape) * sigma for b in self.biases],
            self.activations,
        )
        if len(child.weights) > 1 and rng.random() < structural_prob:
            child.add_hidden_unit(int(rng.integers(len(child.weights) - 1)), rng, sigma)
        return child

    def add_hidden_unit(self, layer, rng, sigma):
        """Append a unit to hidden layer ``layer``; outgoing weights start at zero."""
        w_in, w_out = self.weights[layer], self.weights[layer + 1]
        self.weights[layer] = np.concatenate([w_in, rng.normal(0.0, 1.0, (w_in.shape[0], 1)) * sigma], axis=1)
        self.biases[layer] = np.append(self.biases[layer], 0.0)
        self.weights[layer + 1] = np.concatenate([w_out, np.zeros((1, w_out.shape[1]))], axis=0)


def render_tensor(weights, biases, activations, hw):
    """Differentiable render. ``weights[i]`` is [in, out] or batched [K, in, out].

    Returns [3, H, W] (unbatched) or [K, 3, H, W].
    """
    h, w = hw
    x = Tensor(coordinate_map(h, w))
    batched = weights[0].ndim == 3
    for i, (wt, bt) in enumerate(zip(weights, biases)):
        x = ops.matmul(x, wt)
        x = ops.add(x, ops.reshape(bt, (bt.shape[0], 1, bt.shape[1])) if batched else bt)
        x = ACTIVATIONS[activations[i]](x) if i < len(activations) else ops.sigmoid(x)
    if batched:
        return ops.transpose(ops.reshape(x, (x.shape[0], h, w, OUTPUT_WIDTH)), (0, 3, 1, 2))
    return ops.transpose(ops.reshape(x, (h, w, OUTPUT_WIDTH)), (2, 0, 1))


def cppn_render(genome, resolution):
    """Render a genome to a [3, H, W] array in [0, 1] at any resolution."""
    return render_tensor(genome.weights, genome.biases, genome.activations, resolution).data
