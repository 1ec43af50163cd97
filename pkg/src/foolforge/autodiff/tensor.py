"""Tensor type and the reverse-mode tape.

A :class:`Tensor` wraps a float64 ndarray. Operations on tensors that require
gradients record their parents and a backward closure; :func:`backward` walks
the recorded nodes in reverse creation order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

_next_id = itertools.count()

# Toggle for the per-operation finiteness check. Leave on outside benchmarks.
CHECK_FINITE = True


class NonFiniteError(FloatingPointError):
    """Raised when an operation, gradient, or optimizer step produces NaN/Inf."""


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "op", "id", "name")

    def __init__(self, data, requires_grad=False, name=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.parents = ()
        self.backward_fn = None
        self.op = "leaf"
        self.id = next(_next_id)
        self.name = name

    # -- basic properties -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    def __len__(self):
        return len(self.data)

    # -- operators (implemented in ops) -------------------------------------
    def __add__(self, other):
        return ops.add(self, other)

    def __radd__(self, other):
        return ops.add(other, self)

    def __sub__(self, other):
        return ops.sub(self, other)

    def __rsub__(self, other):
        return ops.sub(other, self)

    def __mul__(self, other):
        return ops.mul(self, other)

    def __rmul__(self, other):
        return ops.mul(other, self)

    def __truediv__(self, other):
        return ops.div(self, other)

    def __rtruediv__(self, other):
        return ops.div(other, self)

    def __neg__(self):
        return ops.neg(self)

    def __pow__(self, p):
        return ops.power(self, p)

    def __matmul__(self, other):
        return ops.matmul(self, other)

    def __getitem__(self, key):
        return ops.getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        return ops.sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return ops.mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)

    def backward(self):
        backward(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def make_node(data, parents, backward_fn, op):
    """Wrap an op result; record the parents only if a gradient can flow."""
    if CHECK_FINITE and not np.isfinite(data).all():
        raise NonFiniteError(f"operation '{op}' produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.id = next(_next_id)
    out.op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out.backward_fn = backward_fn
    else:
        out.requires_grad = False
        out.parents = ()
        out.backward_fn = None
    return out


@dataclass
class Node:
    id: int
    op: str
    parent_ids: tuple
    tensor: Tensor


@dataclass
class Graph:
    """Recorded computation feeding a seed tensor, in topological (creation) order."""

    nodes: list = field(default_factory=list)

    @classmethod
    def trace(cls, output):
        seen = {}
        stack = [output]
        while stack:
            t = stack.pop()
            if t.id in seen or not t.requires_grad:
                continue
            seen[t.id] = t
            stack.extend(t.parents)
        ordered = sorted(seen.values(), key=lambda t: t.id)
        return cls([Node(t.id, t.op, tuple(p.id for p in t.parents), t) for t in ordered])

    @property
    def parameters(self):
        return [n.tensor for n in self.nodes if n.op == "leaf"]

    def backward(self, seed_id=None):
        """Accumulate gradients from the seed node; returns {node id: gradient}."""
        if not self.nodes:
            return {}
        seed = self.nodes[-1] if seed_id is None else next(n for n in self.nodes if n.id == seed_id)
        if seed.tensor.data.size != 1:
            raise ShapeError(f"backward seed must be scalar, got shape {seed.tensor.shape}")
        grads = {seed.id: np.ones_like(seed.tensor.data)}
        for node in reversed(self.nodes):
            g = grads.get(node.id)
            if g is None or node.tensor.backward_fn is None:
                continue
            parent_grads = node.tensor.backward_fn(g)
            for parent, pg in zip(node.tensor.parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                if CHECK_FINITE and not np.isfinite(pg).all():
                    raise NonFiniteError(
                        f"non-finite gradient flowing from '{node.op}' (node {node.id}) "
                        f"into '{parent.op}' (node {parent.id})"
                    )
                prev = grads.get(parent.id)
                grads[parent.id] = pg if prev is None else prev + pg
        return grads


def backward(seed):
    """Run reverse accumulation from a scalar tensor and store ``.grad`` on leaves."""
    if seed.data.size != 1:
        raise ShapeError(f"backward seed must be scalar, got shape {seed.shape}")
    graph = Graph.trace(seed)
    grads = graph.backward(seed.id)
    for node in graph.nodes:
        if node.op == "leaf" and node.id in grads:
            t = node.tensor
            t.grad = grads[node.id] if t.grad is None else t.grad + grads[node.id]
    return graph


def grad(seed, wrt):
    """Gradients of a scalar tensor with respect to each tensor in ``wrt``.

    Does not touch ``.grad``. Tensors that do not influence the seed get zeros.
    """
    if seed.data.size != 1:
        raise ShapeError(f"backward seed must be scalar, got shape {seed.shape}")
    grads = Graph.trace(seed).backward(seed.id)
    return [grads.get(t.id, np.zeros_like(t.data)) for t in wrt]


from foolforge.autodiff import ops  # noqa: E402  (circular: ops needs Tensor)
