"""Gradient descent / ascent and Adam over lists of leaf tensors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from foolforge.autodiff.tensor import NonFiniteError, ShapeError, Tensor


@dataclass(frozen=True)
class OptimConfig:
    kind: str = "adam"  # "sgd" or "adam"
    lr: float = 0.05
    maximize: bool = False
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")


class Optimizer:
    """Updates ``param.data`` in place. State is private to the instance."""

    def __init__(self, params, config=OptimConfig()):
        self.params = list(params)
        self.config = config
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads):
        grads = list(grads)
        if len(grads) != len(self.params):
            raise ShapeError(f"{len(grads)} gradients for {len(self.params)} parameters")
        for i, (p, g) in enumerate(zip(self.params, grads)):
            if g.shape != p.shape:
                raise ShapeError(f"gradient {g.shape} does not match parameter {p.name or i} {p.shape}")
            if not np.isfinite(g).all():
                raise NonFiniteError(f"non-finite gradient for parameter {p.name or i} (node {p.id})")
        cfg = self.config
        sign = 1.0 if cfg.maximize else -1.0
        self.t += 1
        for i, (p, g) in enumerate(zip(self.params, grads)):
            if cfg.kind == "sgd":
                p.data = p.data + sign * cfg.lr * g
                continue
            self.m[i] = cfg.beta1 * self.m[i] + (1 - cfg.beta1) * g
            self.v[i] = cfg.beta2 * self.v[i] + (1 - cfg.beta2) * g * g
            mhat = self.m[i] / (1 - cfg.beta1**self.t)
            vhat = self.v[i] / (1 - cfg.beta2**self.t)
            p.data = p.data + sign * cfg.lr * mhat / (np.sqrt(vhat) + cfg.eps)


def optimizer_step(params, grads, config, state=None):
    """Functional form: returns (updated arrays, state). Inputs are not modified."""
    tensors = [Tensor(np.array(p, dtype=np.float64)) for p in params]
    opt = Optimizer(tensors, config)
    if state is not None:
        opt.t, opt.m, opt.v = state["t"], [m.copy() for m in state["m"]], [v.copy() for v in state["v"]]
    opt.step([np.asarray(g, dtype=np.float64) for g in grads])
    return [t.data for t in tensors], {"t": opt.t, "m": opt.m, "v": opt.v}
