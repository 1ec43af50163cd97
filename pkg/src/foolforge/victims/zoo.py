"""Classifier architectures, inference, and the stock zoo."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from foolforge.autodiff import ops
from foolforge.autodiff.tensor import ShapeError, Tensor
from foolforge.victims.data import CLASS_NAMES

LAYER_KINDS = ("conv", "relu", "pool", "res", "gap", "flatten", "dense")


@dataclass(frozen=True)
class Layer:
    kind: str
    name: str
    out: int = 0
    stride: int = 1

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")


@dataclass(frozen=True)
class ArchitectureSpec:
    name: str
    layers: tuple
    taps: tuple
    num_classes: int = len(CLASS_NAMES)
    input_shape: tuple = (3, 32, 32)

    def __post_init__(self):
        names = [layer.name for layer in self.layers]
        if len(set(names)) != len(names):
            raise ValueError(f"{self.name}: duplicate layer names")
        unknown = [t for t in self.taps if t not in names]
        if unknown:
            raise ValueError(f"{self.name}: taps {unknown} are not layers")
        last = self.layers[-1]
        if last.kind != "dense" or last.out != self.num_classes:
            raise ValueError(f"{self.name}: final layer must be dense with {self.num_classes} outputs")
        conv_idx = [i for i, layer in enumerate(self.layers) if layer.kind in ("conv", "res")]
        if not conv_idx:
            raise ValueError(f"{self.name}: needs at least one convolutional layer")
        # last convolutional stage: everything after the final downsampling step
        down = [i for i, layer in enumerate(self.layers) if layer.kind == "pool" or (layer.kind == "conv" and layer.stride > 1)]
        stage_start = max([i for i in down if i < conv_idx[-1]], default=-1)
        stage = {layer.name for layer in self.layers[stage_start + 1 : conv_idx[-1] + 2]}
        if not stage.intersection(self.taps):
            raise ValueError(f"{self.name}: at least one tap must lie in the last convolutional stage")

    def to_dict(self):
        return {
            "name": self.name,
            "layers": [[layer.kind, layer.name, layer.out, layer.stride] for layer in self.layers],
            "taps": list(self.taps),
            "num_classes": self.num_classes,
            "input_shape": list(self.input_shape),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["name"],
            tuple(Layer(*row) for row in d["layers"]),
            tuple(d["taps"]),
            d["num_classes"],
            tuple(d["input_shape"]),
        )

    def param_shapes(self):
        shapes = {}
        c, h, w = self.input_shape
        flat = None
        for layer in self.layers:
            k = layer.kind
            if k == "conv":
                shapes[f"{layer.name}.w"] = (layer.out, c, 3, 3)
                shapes[f"{layer.name}.b"] = (layer.out,)
                c = layer.out
                h, w = (h + 2 - 3) // layer.stride + 1, (w + 2 - 3) // layer.stride + 1
            elif k == "res":
                for sub in ("conv1", "conv2"):
                    shapes[f"{layer.name}.{sub}.w"] = (c, c, 3, 3)
                    shapes[f"{layer.name}.{sub}.b"] = (c,)
            elif k == "pool":
                h, w = h // 2, w // 2
            elif k == "gap":
                flat = c
            elif k == "flatten":
                flat = c * h * w
            elif k == "dense":
                if flat is None:
                    raise ValueError(f"{self.name}: dense layer {layer.name} before gap/flatten")
                shapes[f"{layer.name}.w"] = (flat, layer.out)
                shapes[f"{layer.name}.b"] = (layer.out,)
                flat = layer.out
        return shapes

    def parameter_count(self):
        return int(sum(np.prod(s) for s in self.param_shapes().values()))


def init_params(spec, rng):
    """He-normal weights, zero biases."""
    params = {}
    for name, shape in spec.param_shapes().items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else shape[0]
            params[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), shape)
    return params


def forward(spec, params, x, taps=()):
    """Run the network on x [N,C,H,W]; returns (logits, {tap: activation}).

    ``params`` values may be arrays (constants) or Tensors (trainable).
    """
    if tuple(x.shape[1:]) != tuple(spec.input_shape):
        raise ShapeError(f"{spec.name}: expected input [N, {', '.join(map(str, spec.input_shape))}], got {tuple(x.shape)}")
    wanted = set(taps)
    unknown = wanted.difference(layer.name for layer in spec.layers)
    if unknown:
        raise KeyError(f"{spec.name}: unknown activation taps {sorted(unknown)}")
    found = {}
    h = x
    for layer in spec.layers:
        k, n = layer.kind, layer.name
        if k == "conv":
            h = ops.conv2d(h, params[f"{n}.w"], params[f"{n}.b"], stride=layer.stride, pad=1)
        elif k == "relu":
            h = ops.relu(h)
        elif k == "pool":
            h = ops.max_pool2d(h)
        elif k == "res":
            r = ops.relu(ops.conv2d(h, params[f"{n}.conv1.w"], params[f"{n}.conv1.b"], pad=1))
            r = ops.conv2d(r, params[f"{n}.conv2.w"], params[f"{n}.conv2.b"], pad=1)
            h = ops.relu(ops.add(h, r))
        elif k == "gap":
            h = ops.global_avg_pool(h)
        elif k == "flatten":
            h = ops.reshape(h, (h.shape[0], -1))
        elif k == "dense":
            h = ops.linear(h, params[f"{n}.w"], params[f"{n}.b"])
        if n in wanted:
            found[n] = h
    return h, found


def _conv_stack(name, rows, taps):
    layers = []
    for row in rows:
        kind, lname, *rest = row
        layers.append(Layer(kind, lname, *rest))
    return ArchitectureSpec(name, tuple(layers), taps)


def plain_cnn():
    """VGG-like straight stack; the default training victim."""
    return _conv_stack(
        "plain-cnn",
        [
            ("conv", "conv1", 16), ("relu", "relu1"), ("pool", "pool1"),
            ("conv", "conv2", 32), ("relu", "relu2"), ("pool", "pool2"),
            ("conv", "conv3_1", 32), ("relu", "relu3_1"),
            ("conv", "conv3_2", 32), ("relu", "relu3_2"),
            ("conv", "conv3_3", 32), ("relu", "relu3_3"),
            ("gap", "gap"), ("dense", "logits", 10),
        ],
        ("relu3_1", "relu3_2", "relu3_3", "logits"),
    )


def residual_cnn():
    return _conv_stack(
        "residual-cnn",
        [
            ("conv", "stem", 16), ("relu", "stem_relu"), ("pool", "pool1"),
            ("res", "block1"),
            ("conv", "down", 32, 2), ("relu", "down_relu"),
            ("res", "block2"), ("res", "block3"),
            ("gap", "gap"), ("dense", "logits", 10),
        ],
        ("down_relu", "block2", "block3", "logits"),
    )


def wide_cnn():
    return _conv_stack(
        "wide-cnn",
        [
            ("conv", "conv1", 24), ("relu", "relu1"), ("pool", "pool1"),
            ("conv", "conv2", 48), ("relu", "relu2"), ("pool", "pool2"),
            ("conv", "conv3", 48), ("relu", "relu3"),
            ("gap", "gap"), ("dense", "fc1", 64), ("relu", "fc1_relu"), ("dense", "logits", 10),
        ],
        ("relu2", "relu3", "fc1_relu", "logits"),
    )


def pool_heavy_cnn():
    return _conv_stack(
        "pool-heavy-cnn",
        [
            ("conv", "conv1", 16), ("relu", "relu1"), ("pool", "pool1"),
            ("conv", "conv2", 24), ("relu", "relu2"), ("pool", "pool2"),
            ("conv", "conv3", 32), ("relu", "relu3"), ("pool", "pool3"),
            ("conv", "conv4", 48), ("relu", "relu4"),
            ("flatten", "flat"), ("dense", "fc1", 64), ("relu", "fc1_relu"), ("dense", "logits", 10),
        ],
        ("relu3", "relu4", "fc1_relu", "logits"),
    )


def strided_cnn():
    """All-convolutional net with strided downsampling; reserved for the black-box oracle."""
    return _conv_stack(
        "strided-cnn",
        [
            ("conv", "conv1", 16), ("relu", "relu1"),
            ("conv", "conv2", 32, 2), ("relu", "relu2"),
            ("conv", "conv3", 48, 2), ("relu", "relu3"),
            ("conv", "conv4", 64, 2), ("relu", "relu4"),
            ("gap", "gap"), ("dense", "fc1", 64), ("relu", "fc1_relu"), ("dense", "logits", 10),
        ],
        ("relu3", "relu4", "fc1_relu", "logits"),
    )


STOCK_ARCHITECTURES = {
    "plain-cnn": plain_cnn,
    "residual-cnn": residual_cnn,
    "wide-cnn": wide_cnn,
    "pool-heavy-cnn": pool_heavy_cnn,
    "strided-cnn": strided_cnn,
}
TRAINING_VICTIM = "plain-cnn"
VALIDATION_VICTIMS = ("residual-cnn", "wide-cnn", "pool-heavy-cnn")
ORACLE_ARCHITECTURE = "strided-cnn"


def get_architecture(name):
    try:
        return STOCK_ARCHITECTURES[name]()
    except KeyError:
        raise KeyError(f"unknown architecture {name!r}; choose from {sorted(STOCK_ARCHITECTURES)}") from None


def representation_taps(spec):
    """The last three pre-classifier activation taps."""
    return tuple(t for t in spec.taps if t != "logits")[-3:]


@dataclass
class Classifier:
    spec: ArchitectureSpec
    params: dict
    labels: tuple = CLASS_NAMES
    fingerprint: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = self.spec.param_shapes()
        for name, shape in expected.items():
            if name not in self.params:
                raise ShapeError(f"{self.spec.name}: missing parameter for layer {name}")
            if tuple(self.params[name].shape) != tuple(shape):
                raise ShapeError(
                    f"{self.spec.name}: layer {name} expects shape {tuple(shape)}, got {tuple(self.params[name].shape)}"
                )
        for arr in self.params.values():
            arr.flags.writeable = False

    @property
    def num_classes(self):
        return self.spec.num_classes

    def forward(self, x, taps=()):
        """Graph-building forward pass; parameters are frozen constants."""
        return forward(self.spec, self.params, x, taps)

    def tap_shape(self, tap):
        _, acts = self.forward(Tensor(np.zeros((1, *self.spec.input_shape))), (tap,))
        return acts[tap].shape[1:]


def _as_batch(c, images):
    x = np.asarray(images.data if isinstance(images, Tensor) else images, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or tuple(x.shape[1:]) != tuple(c.spec.input_shape):
        raise ShapeError(f"{c.spec.name}: expected images [N, {', '.join(map(str, c.spec.input_shape))}], got {x.shape}")
    return x


def predict(c, images, batch_size=256):
    """Softmax class scores [N, num_classes]."""
    x = _as_batch(c, images)
    if x.size and (x.min() < 0 or x.max() > 1):
        raise ValueError("predict: images must lie in [0, 1]")
    out = []
    for i in range(0, len(x), batch_size):
        logits, _ = c.forward(Tensor(x[i : i + batch_size]))
        out.append(ops.softmax(logits).data)
    return np.concatenate(out) if out else np.zeros((0, c.num_classes))


def activations(c, images, tap, batch_size=256):
    if tap not in c.spec.taps:
        raise KeyError(f"{c.spec.name}: {tap!r} is not a declared activation tap {c.spec.taps}")
    x = _as_batch(c, images)
    out = []
    for i in range(0, len(x), batch_size):
        _, acts = c.forward(Tensor(x[i : i + batch_size]), (tap,))
        out.append(acts[tap].data)
    return np.concatenate(out)


def accuracy(c, split):
    if not len(split):
        return float("nan")
    return float((predict(c, split.images).argmax(axis=1) == split.labels).mean())
