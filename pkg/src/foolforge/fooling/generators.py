"""Fooling-image generators.

Five gradient methods share one ascent loop and differ only in how the image
is parameterized (pixels, Fourier coefficients, CPPN weights) and whether a
random affine transform is applied before the victim sees it. The sixth
method evolves CPPN genomes without gradients.

Every generator works on a batch of independent images; the ``fool_*``
functions are single-image conveniences.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from foolforge.autodiff import ops
from foolforge.autodiff.optim import OptimConfig, Optimizer
from foolforge.autodiff.spectral import SpectralParam, spectral_synthesize
from foolforge.autodiff.tensor import NonFiniteError, Tensor, grad
from foolforge.autodiff.warp import AffineParams, affine_warp
from foolforge.fooling.cppn import CPPNGenome, cppn_render, render_tensor
from foolforge.victims.data import STAR_CLASS
from foolforge.victims.zoo import predict

METHODS = ("naive", "tr", "dr", "trdr", "cppn_grad", "cppn_ea")
GRADIENT_METHODS = METHODS[:5]
DEFAULT_LR = {"naive": 0.05, "tr": 0.05, "dr": 0.05, "trdr": 0.05, "cppn_grad": 0.01}


class FoolingError(RuntimeError):
    def __init__(self, method, step, detail):
        super().__init__(f"{method}: optimization failed at step {step}: {detail}")
        self.step = step


@dataclass(frozen=True)
class FoolingConfig:
    method: str = "naive"
    target: int = STAR_CLASS
    steps: int = 512  # generations for cppn_ea
    lr: float | None = None
    rotation_deg: float = 5.0
    scale_range: tuple = (0.9, 1.1)
    jitter_px: float = 2.0
    seed: int = 0
    population: int = 32
    elites: int = 8
    mutation_sigma: float = 0.1
    structural_prob: float = 0.05
    cppn_hidden: tuple = (16, 16, 16)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown fooling method {self.method!r}; choose from {METHODS}")
        if self.steps <= 0:
            raise ValueError("steps must be positive")
        lo, hi = self.scale_range
        if not (0 < lo <= 1.0 <= hi):
            raise ValueError(f"scale range {self.scale_range} must be positive and contain 1")
        if not 1 <= self.elites <= self.population:
            raise ValueError("need 1 <= elites <= population")

    @property
    def learning_rate(self):
        return self.lr if self.lr is not None else DEFAULT_LR.get(self.method, 0.05)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclass
class FoolingImage:
    image: np.ndarray  # [3, H, W] in [0, 1]
    method: str
    target: int
    confidence: float  # P(target | image) under the victim, untransformed
    trace: list = field(default_factory=list)  # confidence per step / generation
    seed: int = 0


def _sample_transforms(rng, cfg, count):
    return [AffineParams.sample(rng, cfg.rotation_deg, cfg.scale_range, cfg.jitter_px) for _ in range(count)]


def _ascend(victim, cfg, params, render, count, transform, project=None):
    """Maximize sum_i log P(target | T_i(render()_i)) with Adam; returns per-image traces."""
    rng_t = np.random.default_rng([cfg.seed, 2])
    opt = Optimizer(params, OptimConfig("adam", lr=cfg.learning_rate, maximize=True))
    traces = [[] for _ in range(count)]
    for step in range(cfg.steps):
        try:
            img = render()
            if transform:
                ts = _sample_transforms(rng_t, cfg, count)
                if not all(t.is_identity for t in ts):
                    img = affine_warp(img, ts)
            logits, _ = victim.forward(img)
            logp = ops.log_softmax(logits)
            for i, c in enumerate(np.exp(logp.data[:, cfg.target])):
                traces[i].append(float(c))
            grads = grad(ops.sum(logp[:, cfg.target]), params)
            opt.step(grads)
        except NonFiniteError as e:
            raise FoolingError(cfg.method, step, str(e)) from e
        if project is not None:
            project()
    return traces


def _finish(victim, cfg, images, traces):
    out = []
    for img, trace in zip(images, traces):
        img = np.ascontiguousarray(img)
        conf = float(predict(victim, img[None])[0, cfg.target])
        out.append(FoolingImage(img, cfg.method, cfg.target, conf, trace, cfg.seed))
    return out


def _pixel_images(victim, cfg, count, transform):
    rng = np.random.default_rng([cfg.seed, 1])
    x = Tensor(rng.uniform(0.0, 1.0, (count, *victim.spec.input_shape)), requires_grad=True, name="pixels")

    def clamp():
        np.clip(x.data, 0.0, 1.0, out=x.data)

    traces = _ascend(victim, cfg, [x], lambda: x, count, transform, clamp)
    return _finish(victim, cfg, x.data.copy(), traces)


def _spectral_images(victim, cfg, count, transform):
    rng = np.random.default_rng([cfg.seed, 1])
    shape = victim.spec.input_shape
    p = SpectralParam.random(shape, rng, std=0.01, batch=count)
    theta = Tensor(p.coeffs, requires_grad=True, name="theta")
    traces = _ascend(victim, cfg, [theta], lambda: spectral_synthesize(theta, shape), count, transform)
    images = spectral_synthesize(theta.data, shape).data
    return _finish(victim, cfg, images, traces)


def _cppn_grad_images(victim, cfg, count):
    rng = np.random.default_rng([cfg.seed, 1])
    genomes = [CPPNGenome.random(rng, cfg.cppn_hidden) for _ in range(count)]
    acts = genomes[0].activations
    ws = [Tensor(np.stack([g.weights[i] for g in genomes]), requires_grad=True, name=f"w{i}") for i in range(len(acts) + 1)]
    bs = [Tensor(np.stack([g.biases[i] for g in genomes]), requires_grad=True, name=f"b{i}") for i in range(len(acts) + 1)]
    hw = victim.spec.input_shape[1:]
    traces = _ascend(victim, cfg, ws + bs, lambda: render_tensor(ws, bs, acts, hw), count, transform=False)
    images = render_tensor([w.data for w in ws], [b.data for b in bs], acts, hw).data
    return _finish(victim, cfg, images, traces)


def generate(victim, cfg, count=1):
    """Generate ``count`` independent fooling images with one method."""
    m = cfg.method
    if m == "naive":
        return _pixel_images(victim, cfg, count, transform=False)
    if m == "tr":
        return _pixel_images(victim, cfg, count, transform=True)
    if m == "dr":
        return _spectral_images(victim, cfg, count, transform=False)
    if m == "trdr":
        return _spectral_images(victim, cfg, count, transform=True)
    if m == "cppn_grad":
        return _cppn_grad_images(victim, cfg, count)
    rng = np.random.default_rng([cfg.seed, 4])
    return [fool_cppn_ea(victim, cfg.replace(seed=int(s))) for s in rng.integers(2**31, size=count)]


def _require(cfg, method):
    if cfg.method != method:
        raise ValueError(f"config method is {cfg.method!r}, expected {method!r}")


def fool_naive(victim, cfg):
    _require(cfg, "naive")
    return generate(victim, cfg)[0]


def fool_tr(victim, cfg):
    _require(cfg, "tr")
    return generate(victim, cfg)[0]


def fool_dr(victim, cfg):
    _require(cfg, "dr")
    return generate(victim, cfg)[0]


def fool_trdr(victim, cfg):
    _require(cfg, "trdr")
    return generate(victim, cfg)[0]


def fool_cppn_grad(victim, cfg):
    _require(cfg, "cppn_grad")
    return generate(victim, cfg)[0]


def _fitness(victim, genomes, target, hw):
    images = np.stack([cppn_render(g, hw) for g in genomes])
    return predict(victim, images)[:, target]


def fool_cppn_ea(victim, cfg):
    """(mu + lambda) evolution of CPPN genomes; fitness is P(target | render)."""
    _require(cfg, "cppn_ea")
    rng = np.random.default_rng([cfg.seed, 3])
    hw = victim.spec.input_shape[1:]
    mu = cfg.elites
    lam = max(cfg.population - mu, 1)
    pop = [CPPNGenome.random(rng, cfg.cppn_hidden) for _ in range(cfg.population)]
    fit = _fitness(victim, pop, cfg.target, hw)
    order = np.argsort(-fit, kind="stable")[:mu]
    elites, elite_fit = [pop[i] for i in order], fit[order]
    trace = [float(elite_fit[0])]
    for _ in range(cfg.steps):
        parents = rng.integers(mu, size=lam)
        kids = [elites[i].mutate(rng, cfg.mutation_sigma, cfg.structural_prob) for i in parents]
        pool = elites + kids
        pool_fit = np.concatenate([elite_fit, _fitness(victim, kids, cfg.target, hw)])
        order = np.argsort(-pool_fit, kind="stable")[:mu]
        elites, elite_fit = [pool[i] for i in order], pool_fit[order]
        trace.append(float(elite_fit[0]))
    return _finish(victim, cfg, [cppn_render(elites[0], hw)], [trace])[0]


GENERATORS = {
    "naive": fool_naive,
    "tr": fool_tr,
    "dr": fool_dr,
    "trdr": fool_trdr,
    "cppn_grad": fool_cppn_grad,
    "cppn_ea": fool_cppn_ea,
}
