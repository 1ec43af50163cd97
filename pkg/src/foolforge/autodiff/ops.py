"""Differentiable primitives.

Every function takes Tensors (or array-likes, treated as constants) and
returns a Tensor. Backward closures return one gradient per parent, or
``None`` where no gradient is needed.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from foolforge.autodiff.tensor import ShapeError, Tensor, as_tensor, make_node


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    ndiff = g.ndim - len(shape)
    if ndiff:
        g = g.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# -- elementwise arithmetic ---------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_node(a.data + b.data, (a, b), bw, "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_node(a.data - b.data, (a, b), bw, "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def bw(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_node(a.data * b.data, (a, b), bw, "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    out = a.data / b.data

    def bw(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_node(out, (a, b), bw, "div")


def neg(a):
    a = as_tensor(a)
    return make_node(-a.data, (a,), lambda g: (-g,), "neg")


def power(a, p):
    a = as_tensor(a)
    p = float(p)
    out = a.data**p

    def bw(g):
        return (g * p * a.data ** (p - 1.0),)

    return make_node(out, (a,), bw, "power")


def square(a):
    a = as_tensor(a)
    return make_node(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,), "square")


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return make_node(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return make_node(out, (a,), lambda g: (g * out,), "exp")


def log(a):
    a = as_tensor(a)
    return make_node(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sin(a):
    a = as_tensor(a)
    return make_node(np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),), "sin")


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return make_node(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(a):
    a = as_tensor(a)
    out = _sigmoid(a.data)
    return make_node(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0  # gradient at exactly 0 is 0
    return make_node(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def gauss(a):
    """exp(-x^2), the CPPN 'gaussian' activation."""
    a = as_tensor(a)
    out = np.exp(-a.data * a.data)
    return make_node(out, (a,), lambda g: (-2.0 * g * a.data * out,), "gauss")


def clamp_st(a, lo=0.0, hi=1.0):
    """Clamp in the forward pass, identity gradient in the backward pass."""
    a = as_tensor(a)
    return make_node(np.clip(a.data, lo, hi), (a,), lambda g: (g,), "clamp_st")


# -- reductions and shape ops -------------------------------------------------

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum(a, axis=None, keepdims=False):  # noqa: A001
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_node(np.asarray(out), (a,), bw, "sum")


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    out = a.data.mean(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return make_node(np.asarray(out), (a,), bw, "mean")


def reshape(a, shape):
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} to {tuple(shape)}") from None
    return make_node(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a, axes=None):
    a = as_tensor(a)
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    out = np.ascontiguousarray(a.data.transpose(axes))
    return make_node(out, (a,), lambda g: (g.transpose(inv),), "transpose")


def getitem(a, key):
    a = as_tensor(a)
    out = np.array(a.data[key], dtype=np.float64)

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, key, g)
        return (full,)

    return make_node(out, (a,), bw, "getitem")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_node(out, tuple(tensors), bw, "concat")


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return make_node(out, tuple(tensors), bw, "stack")


# -- linear algebra -----------------------------------------------------------

def matmul(a, b):
    """Matrix product with numpy batching rules (operands of rank >= 2)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = np.matmul(a.data, b.data)

    def bw(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape) if b.requires_grad else None
        return ga, gb

    return make_node(out, (a, b), bw, "matmul")


def linear(x, w, b=None):
    """x @ w + b for x [N, in], w [in, out], b [out]."""
    y = matmul(x, w)
    return y if b is None else add(y, b)


# -- convolution --------------------------------------------------------------

def _im2col(xp, kh, kw, stride, ho, wo):
    """Padded x [N,C,Hp,Wp] -> columns [C*kh*kw, N*ho*wo] (channel-major)."""
    n, c = xp.shape[:2]
    xc = np.ascontiguousarray(xp.transpose(1, 0, 2, 3))
    win = sliding_window_view(xc, (kh, kw), axis=(2, 3))
    win = win[:, :, : stride * (ho - 1) + 1 : stride, : stride * (wo - 1) + 1 : stride]
    return win.transpose(0, 4, 5, 1, 2, 3).reshape(c * kh * kw, n * ho * wo)


def _col2im(cols, shape_p, kh, kw, stride, ho, wo):
    """Adjoint of _im2col: scatter-add columns [C*kh*kw, N*ho*wo] into padded [N,C,Hp,Wp]."""
    n, c, hp, wp = shape_p
    cols = cols.reshape(c, kh, kw, n, ho, wo)
    out = np.zeros((c, n, hp, wp))
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride] += cols[:, i, j]
    return out.transpose(1, 0, 2, 3)


def conv2d(x, w, b=None, stride=1, pad=0):
    """Cross-correlation of x [N,C,H,W] with kernel w [F,C,kh,kw], zero padding."""
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: input {x.shape} incompatible with kernel {w.shape}")
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    if kh > h + 2 * pad or kw > wd + 2 * pad:
        raise ShapeError(f"conv2d: kernel {w.shape} larger than padded input {x.shape} (pad={pad})")
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    cols = _im2col(xp, kh, kw, stride, ho, wo)
    wm = w.data.reshape(f, -1)
    out = wm @ cols
    parents = (x, w)
    if b is not None:
        b = as_tensor(b)
        if b.shape != (f,):
            raise ShapeError(f"conv2d: bias {b.shape} does not match {f} filters")
        out += b.data[:, None]
        parents = (x, w, b)
    out = np.ascontiguousarray(out.reshape(f, n, ho, wo).transpose(1, 0, 2, 3))

    def bw(g):
        gm = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(f, -1)
        gx = gw = None
        if x.requires_grad:
            gxp = _col2im(wm.T @ gm, xp.shape, kh, kw, stride, ho, wo)
            gx = np.ascontiguousarray(gxp[:, :, pad : pad + h, pad : pad + wd] if pad else gxp)
        if w.requires_grad:
            gw = (gm @ cols.T).reshape(w.shape)
        if b is not None:
            return gx, gw, (gm.sum(axis=1) if b.requires_grad else None)
        return gx, gw

    return make_node(out, parents, bw, "conv2d")


def conv_transpose2d(x, w, b=None, stride=1, pad=0, output_padding=0):
    """Transposed convolution; x [N,Cin,H,W], w [Cin,Cout,kh,kw] (adjoint of conv2d)."""
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"conv_transpose2d: input {x.shape} incompatible with kernel {w.shape}")
    n, cin, h, wd = x.shape
    _, cout, kh, kw = w.shape
    hp = (h - 1) * stride + kh + output_padding
    wp = (wd - 1) * stride + kw + output_padding
    ho, wo = hp - 2 * pad, wp - 2 * pad
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"conv_transpose2d: empty output for input {x.shape}, kernel {w.shape}")
    xm = np.ascontiguousarray(x.data.transpose(1, 0, 2, 3)).reshape(cin, -1)
    wm = w.data.reshape(cin, -1)
    full = _col2im(wm.T @ xm, (n, cout, hp, wp), kh, kw, stride, h, wd)
    out = np.ascontiguousarray(full[:, :, pad : pad + ho, pad : pad + wo])
    parents = (x, w)
    if b is not None:
        b = as_tensor(b)
        if b.shape != (cout,):
            raise ShapeError(f"conv_transpose2d: bias {b.shape} does not match {cout} channels")
        out = out + b.data[:, None, None]
        parents = (x, w, b)

    def bw(g):
        gp = np.zeros((n, cout, hp, wp))
        gp[:, :, pad : pad + ho, pad : pad + wo] = g
        gcols = _im2col(gp, kh, kw, stride, h, wd)
        gx = gw = None
        if x.requires_grad:
            gx = np.ascontiguousarray((wm @ gcols).reshape(cin, n, h, wd).transpose(1, 0, 2, 3))
        if w.requires_grad:
            gw = (xm @ gcols.T).reshape(w.shape)
        if b is not None:
            return gx, gw, (g.sum(axis=(0, 2, 3)) if b.requires_grad else None)
        return gx, gw

    return make_node(out, parents, bw, "conv_transpose2d")


# -- pooling and resampling ---------------------------------------------------

def max_pool2d(x):
    """2x2 max pooling with stride 2; ties go to the first element in row-major window order."""
    x = as_tensor(x)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"max_pool2d: spatial dims must be even, got {x.shape}")
    corners = [x.data[:, :, i::2, j::2] for i in (0, 1) for j in (0, 1)]
    out = np.maximum(np.maximum(corners[0], corners[1]), np.maximum(corners[2], corners[3]))
    masks, taken = [], np.zeros(out.shape, dtype=bool)
    for cor in corners:
        m = (cor == out) & ~taken
        taken |= m
        masks.append(m)

    def bw(g):
        gx = np.zeros_like(x.data)
        for (i, j), m in zip(((0, 0), (0, 1), (1, 0), (1, 1)), masks):
            gx[:, :, i::2, j::2] = g * m
        return (gx,)

    return make_node(out, (x,), bw, "max_pool2d")


def avg_pool2d(x, k, stride=1):
    """Uniform k x k window mean, no padding."""
    x = as_tensor(x)
    n, c, h, w = x.shape
    if k > h or k > w:
        raise ShapeError(f"avg_pool2d: window {k} larger than input {x.shape}")
    ho, wo = (h - k) // stride + 1, (w - k) // stride + 1
    win = sliding_window_view(x.data, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    out = win.mean(axis=(-2, -1))

    def bw(g):
        gx = np.zeros_like(x.data)
        gs = g / (k * k)
        for i in range(k):
            for j in range(k):
                gx[:, :, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride] += gs
        return (gx,)

    return make_node(out, (x,), bw, "avg_pool2d")


def global_avg_pool(x):
    return mean(x, axis=(2, 3))


def _nearest_matrix(n_out, n_in):
    src = np.minimum(((np.arange(n_out) + 0.5) * n_in / n_out).astype(int), n_in - 1)
    m = np.zeros((n_out, n_in))
    m[np.arange(n_out), src] = 1.0
    return m


def _bilinear_matrix(n_out, n_in):
    # half-pixel centers, edge-clamped
    src = np.clip((np.arange(n_out) + 0.5) * n_in / n_out - 0.5, 0, n_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    m = np.zeros((n_out, n_in))
    np.add.at(m, (np.arange(n_out), lo), 1.0 - frac)
    np.add.at(m, (np.arange(n_out), hi), frac)
    return m


def _separable_resample(x, ry, rx, op):
    out = np.matmul(np.matmul(ry, x.data), rx.T)

    def bw(g):
        return (np.matmul(np.matmul(ry.T, g), rx),)

    return make_node(out, (x,), bw, op)


def resize_nearest(x, size):
    x = as_tensor(x)
    h, w = x.shape[-2:]
    return _separable_resample(x, _nearest_matrix(size[0], h), _nearest_matrix(size[1], w), "resize_nearest")


def resize_bilinear(x, size):
    x = as_tensor(x)
    h, w = x.shape[-2:]
    return _separable_resample(x, _bilinear_matrix(size[0], h), _bilinear_matrix(size[1], w), "resize_bilinear")


# -- normalisation statistics -------------------------------------------------

def channel_mean(x):
    """Per-sample, per-channel mean over H x W: [N,C,H,W] -> [N,C]."""
    return mean(x, axis=(2, 3))


def channel_var(x):
    """Per-sample, per-channel biased variance over H x W: [N,C,H,W] -> [N,C]."""
    x = as_tensor(x)
    m = x.data.mean(axis=(2, 3), keepdims=True)
    d = x.data - m
    out = (d * d).mean(axis=(2, 3))
    count = x.shape[2] * x.shape[3]
    return make_node(out, (x,), lambda g: (g[:, :, None, None] * 2.0 * d / count,), "channel_var")


def adaptive_instance_norm(x, scale, bias, eps=1e-5):
    """scale * (x - mean) / sqrt(var + eps) + bias, statistics per sample and channel."""
    x, scale, bias = as_tensor(x), as_tensor(scale), as_tensor(bias)
    if eps <= 0:
        raise ValueError("adaptive_instance_norm: eps must be positive")
    c = x.shape[1]
    if scale.shape != (c,) or bias.shape != (c,):
        raise ShapeError(f"adaptive_instance_norm: scale {scale.shape}/bias {bias.shape} do not match input {x.shape}")
    m = x.data.mean(axis=(2, 3), keepdims=True)
    d = x.data - m
    var = (d * d).mean(axis=(2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = d * inv
    s = scale.data[:, None, None]
    out = s * xhat + bias.data[:, None, None]
    count = x.shape[2] * x.shape[3]

    def bw(g):
        gx = gs = gb = None
        if x.requires_grad:
            gh = g * s
            gx = inv / count * (count * gh - gh.sum(axis=(2, 3), keepdims=True)
                                - xhat * (gh * xhat).sum(axis=(2, 3), keepdims=True))
        if scale.requires_grad:
            gs = (g * xhat).sum(axis=(0, 2, 3))
        if bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return gx, gs, gb

    return make_node(out, (x, scale, bias), bw, "adaptive_instance_norm")


# -- softmax family -----------------------------------------------------------

def _log_softmax(z):
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(z):
    z = as_tensor(z)
    out = np.exp(_log_softmax(z.data))

    def bw(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return make_node(out, (z,), bw, "softmax")


def log_softmax(z):
    z = as_tensor(z)
    out = _log_softmax(z.data)
    p = np.exp(out)

    def bw(g):
        return (g - p * g.sum(axis=-1, keepdims=True),)

    return make_node(out, (z,), bw, "log_softmax")


def cross_entropy(logits, targets):
    """Mean negative log-likelihood of integer targets under softmax(logits)."""
    logits = as_tensor(logits)
    n = logits.shape[0]
    targets = np.broadcast_to(np.asarray(targets, dtype=int), (n,))
    if targets.min() < 0 or targets.max() >= logits.shape[1]:
        raise ShapeError(f"cross_entropy: targets out of range for {logits.shape[1]} classes")
    lsm = _log_softmax(logits.data)
    rows = np.arange(n)
    out = np.asarray(-lsm[rows, targets].mean())

    def bw(g):
        grad = np.exp(lsm)
        grad[rows, targets] -= 1.0
        return (grad * (g / n),)

    return make_node(out, (logits,), bw, "cross_entropy")
