"""Central finite-difference gradient checks."""

from __future__ import annotations

import numpy as np

from foolforge.autodiff import ops
from foolforge.autodiff.tensor import Tensor, grad


def numerical_grad(f, arrays, h=1e-5):
    """Central differences of scalar ``f(*arrays)`` w.r.t. each array."""
    out = []
    for a in arrays:
        g = np.zeros_like(a)
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f(*arrays)
            flat[i] = orig - h
            fm = f(*arrays)
            flat[i] = orig
            gflat[i] = (fp - fm) / (2 * h)
        out.append(g)
    return out


def relative_error(analytic, numeric):
    """max |a - n| / max(max |a|, max |n|), with a tiny floor."""
    num = max(np.abs(a - n).max() for a, n in zip(analytic, numeric))
    den = max(max(np.abs(a).max(), np.abs(n).max()) for a, n in zip(analytic, numeric))
    return float(num / max(den, 1e-12))


def grad_check(fn, inputs, rng=None, h=1e-5):
    """Compare backprop with finite differences for ``sum(fn(*inputs) * r)``.

    ``r`` is a fixed random projection so every output element contributes.
    Returns the relative error.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    arrays = [np.array(x, dtype=np.float64) for x in inputs]
    probe = fn(*[Tensor(a) for a in arrays]).data
    r = rng.standard_normal(probe.shape)

    def scalar(*arrs):
        return float((fn(*[Tensor(a) for a in arrs]).data * r).sum())

    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = fn(*leaves)
    analytic = grad(ops.sum(ops.mul(out, r)), leaves)
    numeric = numerical_grad(scalar, arrays, h)
    return relative_error(analytic, numeric)
