"""The transfer network: strided conv encoder, AdaIN residual decoder, conditioning MLP.

The decoder predicts a residual in logit space that is added to the source
image, so an untrained network starts close to the identity map.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from foolforge.autodiff import ops
from foolforge.autodiff.tensor import ShapeError, Tensor, as_tensor

ADAIN_BLOCKS = 3
SOURCE_CLIP = 1e-3


@dataclass(frozen=True)
class FTNConfig:
    enc_channels: tuple = (32, 64)
    enc_res_blocks: int = 2
    adain_blocks: int = ADAIN_BLOCKS
    mlp_hidden: int = 128
    gamma: float = 1e-5  # the summed MMD over thousands of activations is ~1e4; SSIM loss is <= 2
    lam: float = 1e-4
    batch_size: int = 8  # also the bank sampling number
    taps: tuple = ()  # empty -> the victim's default representation taps
    use_adain: bool = True  # False: plain instance norm, MLP unused
    epochs: int = 4
    steps_per_epoch: int | None = None  # None -> one pass over the data
    lr: float = 2e-4  # larger steps saturate the output sigmoid within a few updates
    eps: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.adain_blocks != ADAIN_BLOCKS:
            raise ValueError(f"the decoder has exactly {ADAIN_BLOCKS} AdaIN blocks")
        if self.gamma < 0 or self.lam < 0:
            raise ValueError("gamma and lam must be non-negative")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be positive and epochs non-negative")
        if len(self.enc_channels) != 2:
            raise ValueError("enc_channels needs two widths (two stride-2 stages)")

    @property
    def channels(self):
        return self.enc_channels[1]

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["enc_channels"] = list(self.enc_channels)
        d["taps"] = list(self.taps)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["enc_channels"] = tuple(d["enc_channels"])
        d["taps"] = tuple(d["taps"])
        return cls(**d)


SMOKE_FTN = FTNConfig(enc_channels=(16, 32), enc_res_blocks=1, mlp_hidden=64)


def param_shapes(cfg, stats_width):
    c1, c2 = cfg.enc_channels
    shapes = {
        "enc.conv0.w": (c1, 3, 3, 3),
        "enc.conv0.b": (c1,),
        "enc.conv1.w": (c2, c1, 3, 3),
        "enc.conv1.b": (c2,),
    }
    for i in range(cfg.enc_res_blocks):
        for j in (1, 2):
            shapes[f"enc.res{i}.conv{j}.w"] = (c2, c2, 3, 3)
            shapes[f"enc.res{i}.conv{j}.b"] = (c2,)
    for k in range(cfg.adain_blocks):
        for j in (1, 2):
            shapes[f"dec.block{k}.conv{j}.w"] = (c2, c2, 3, 3)
            shapes[f"dec.block{k}.conv{j}.b"] = (c2,)
    shapes.update(
        {
            "dec.up0.w": (c2, c1, 4, 4),
            "dec.up0.b": (c1,),
            "dec.up1.w": (c1, c1, 4, 4),
            "dec.up1.b": (c1,),
            "dec.out.w": (3, c1, 3, 3),
            "dec.out.b": (3,),
        }
    )
    if cfg.use_adain:
        shapes["mlp.fc1.w"] = (stats_width, cfg.mlp_hidden)
        shapes["mlp.fc1.b"] = (cfg.mlp_hidden,)
        shapes["mlp.fc2.w"] = (cfg.mlp_hidden, 2 * cfg.adain_blocks * c2)
        shapes["mlp.fc2.b"] = (2 * cfg.adain_blocks * c2,)
    return shapes


def init_params(cfg, stats_width, rng):
    params = {}
    for name, shape in param_shapes(cfg, stats_width).items():
        if name == "mlp.fc2.b":
            half = shape[0] // 2
            params[name] = np.concatenate([np.ones(half), np.zeros(half)])  # scale 1, bias 0
        elif name.endswith(".b"):
            params[name] = np.zeros(shape)
        elif name == "dec.out.w":
            params[name] = rng.normal(0.0, 1e-3, shape)  # near-identity start
        elif name == "mlp.fc2.w":
            params[name] = rng.normal(0.0, 1e-3, shape)
        elif name == "mlp.fc1.w":
            params[name] = rng.normal(0.0, np.sqrt(2.0 / shape[0]), shape)
        elif name.startswith("dec.up"):
            params[name] = rng.normal(0.0, np.sqrt(2.0 / (shape[0] * 4)), shape)
        else:
            params[name] = rng.normal(0.0, np.sqrt(2.0 / np.prod(shape[1:])), shape)
    return params


def condition_params(mlp, bank_or_stats, blocks=ADAIN_BLOCKS):
    """MLP over the bank's per-feature (mean, variance) -> (scales, biases), each [blocks, C]."""
    stats = bank_or_stats.statistics() if hasattr(bank_or_stats, "statistics") else bank_or_stats
    stats = as_tensor(stats)
    w1 = as_tensor(mlp["mlp.fc1.w"])
    if stats.ndim != 1 or stats.shape[0] != w1.shape[0]:
        raise ShapeError(f"condition_params: MLP expects {w1.shape[0]} statistics, got {stats.shape}")
    h = ops.relu(ops.linear(ops.reshape(stats, (1, -1)), w1, mlp["mlp.fc1.b"]))
    out = ops.linear(h, mlp["mlp.fc2.w"], mlp["mlp.fc2.b"])
    c = out.shape[1] // (2 * blocks)
    out = ops.reshape(out, (2, blocks, c))
    return out[0], out[1]


def _conv(x, p, name, stride=1):
    return ops.conv2d(x, p[f"{name}.w"], p[f"{name}.b"], stride=stride, pad=1)


def encode(p, x, cfg):
    h = ops.relu(_conv(x, p, "enc.conv0", stride=2))
    h = ops.relu(_conv(h, p, "enc.conv1", stride=2))
    for i in range(cfg.enc_res_blocks):
        r = _conv(ops.relu(_conv(h, p, f"enc.res{i}.conv1")), p, f"enc.res{i}.conv2")
        h = ops.relu(h + r)
    return h


def decode(p, h, scales, biases, cfg):
    ones, zeros = np.ones(cfg.channels), np.zeros(cfg.channels)
    for k in range(cfg.adain_blocks):
        r = _conv(h, p, f"dec.block{k}.conv1")
        if scales is None:
            r = ops.adaptive_instance_norm(r, ones, zeros, cfg.eps)
        else:
            r = ops.adaptive_instance_norm(r, scales[k], biases[k], cfg.eps)
        r = _conv(ops.relu(r), p, f"dec.block{k}.conv2")
        h = h + r
    h = ops.relu(ops.conv_transpose2d(h, p["dec.up0.w"], p["dec.up0.b"], stride=2, pad=1))
    h = ops.relu(ops.conv_transpose2d(h, p["dec.up1.w"], p["dec.up1.b"], stride=2, pad=1))
    return _conv(h, p, "dec.out")


def source_logit(images):
    x = np.clip(np.asarray(images, dtype=np.float64), SOURCE_CLIP, 1.0 - SOURCE_CLIP)
    return np.log(x) - np.log1p(-x)


def check_sources(images):
    x = images.data if isinstance(images, Tensor) else np.asarray(images, dtype=np.float64)
    if x.ndim != 4 or x.shape[1] != 3 or x.shape[2] % 4 or x.shape[3] % 4:
        raise ShapeError(f"ftn: expected sources [N, 3, H, W] with H, W divisible by 4, got {x.shape}")
    if x.size and (x.min() < 0 or x.max() > 1):
        raise ValueError("ftn: source images must lie in [0, 1]")
    return x


def ftn_graph(p, cfg, sources, cond):
    """Differentiable forward; ``cond`` is (scales, biases) or None for plain instance norm."""
    x = check_sources(sources)
    scales, biases = cond if cond is not None else (None, None)
    delta = decode(p, encode(p, Tensor(x), cfg), scales, biases, cfg)
    return ops.sigmoid(Tensor(source_logit(x)) + delta)


@dataclass
class FTNModel:
    config: FTNConfig
    params: dict
    bank: object  # RepresentationBank
    fingerprint: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = param_shapes(self.config, 2 * self.bank.width)
        for name, shape in expected.items():
            if name not in self.params:
                raise ShapeError(f"ftn: missing parameter {name}")
            if tuple(self.params[name].shape) != tuple(shape):
                raise ShapeError(f"ftn: parameter {name} expects {tuple(shape)}, got {tuple(self.params[name].shape)}")
        for arr in self.params.values():
            arr.flags.writeable = False

    def conditioning(self):
        if not self.config.use_adain:
            return None
        return condition_params(self.params, self.bank, self.config.adain_blocks)


def ftn_forward(model, sources, batch_size=64):
    """Map sources [N,3,H,W] in [0,1] to adversarial images of the same shape."""
    x = check_sources(sources)
    cond = model.conditioning()
    out = [ftn_graph(model.params, model.config, x[i : i + batch_size], cond).data for i in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.zeros_like(x)
