"""Mini-batch training of the transfer network against a frozen victim."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from foolforge.autodiff.optim import OptimConfig, Optimizer
from foolforge.autodiff.tensor import NonFiniteError, Tensor, grad
from foolforge.ftn.bank import flatten_taps
from foolforge.ftn.losses import combine, loss_content, loss_mmd, loss_tv
from foolforge.ftn.model import FTNModel, condition_params, ftn_graph, init_params

log = logging.getLogger(__name__)

REPORT_HEADER = ("step", "loss_content", "loss_rep", "loss_tv", "loss_total")


class FTNTrainingError(RuntimeError):
    def __init__(self, step, detail):
        super().__init__(f"ftn training failed at step {step}: {detail}")
        self.step = step


@dataclass
class StepLosses:
    step: int
    content: float
    rep: float
    tv: float
    total: float

    def row(self):
        return (self.step, self.content, self.rep, self.tv, self.total)


def batch_losses(params, cfg, victim, bank, sources, stats):
    """Forward one batch; returns (total, content, rep, tv) as graph nodes."""
    cond = condition_params(params, stats, cfg.adain_blocks) if cfg.use_adain else None
    adv = ftn_graph(params, cfg, sources, cond)
    _, acts = victim.forward(adv, bank.taps)
    phi_adv = flatten_taps(acts, bank.taps)
    l_c = loss_content(adv, sources)
    l_rep = loss_mmd(phi_adv, bank.features)
    l_tv = loss_tv(adv)
    return combine(l_c, l_rep, l_tv, cfg.gamma, cfg.lam), l_c, l_rep, l_tv


def train_ftn(config, victim, bank, data):
    """Returns (FTNModel, list of StepLosses)."""
    taps = tuple(config.taps) if config.taps else bank.taps
    if taps != tuple(bank.taps):
        raise ValueError(f"bank taps {bank.taps} differ from configured taps {taps}")
    if bank.n != config.batch_size:
        raise ValueError(f"bank holds {bank.n} rows but the batch size (sampling number) is {config.batch_size}")
    if len(data) < config.batch_size:
        raise ValueError(f"need at least {config.batch_size} source images, got {len(data)}")
    rng = np.random.default_rng([config.seed, 31])
    stats = bank.statistics()
    raw = init_params(config, stats.shape[0], rng)
    names = sorted(raw)
    params = {k: Tensor(raw[k], requires_grad=True, name=k) for k in names}
    opt = Optimizer([params[k] for k in names], OptimConfig("adam", lr=config.lr))
    per_epoch = len(data) // config.batch_size
    if config.steps_per_epoch is not None:
        per_epoch = min(per_epoch, config.steps_per_epoch)
    history = []
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(data))
        for b in range(per_epoch):
            idx = order[b * config.batch_size : (b + 1) * config.batch_size]
            try:
                total, l_c, l_rep, l_tv = batch_losses(params, config, victim, bank, data.images[idx], stats)
                opt.step(grad(total, [params[k] for k in names]))
            except NonFiniteError as e:
                raise FTNTrainingError(step, str(e)) from e
            history.append(StepLosses(step, l_c.item(), l_rep.item(), l_tv.item(), total.item()))
            step += 1
        if per_epoch:
            recent = history[-per_epoch:]
            log.info("ftn epoch %d total %.5f", epoch, np.mean([h.total for h in recent]))
    model = FTNModel(
        config,
        {k: p.data.copy() for k, p in params.items()},
        bank,
        fingerprint={
            "victim": victim.spec.name,
            "dataset": data.fingerprint(),
            "bank": bank.fingerprint(),
            "seed": int(config.seed),
            "steps": step,
        },
    )
    return model, history


def epochs_to_threshold(history, steps_per_epoch, threshold):
    """First epoch (1-based) whose mean total loss is at or below ``threshold``; None if never."""
    if steps_per_epoch < 1:
        raise ValueError("steps_per_epoch must be positive")
    totals = np.array([h.total for h in history], dtype=np.float64)
    for e in range(len(totals) // steps_per_epoch):
        if totals[e * steps_per_epoch : (e + 1) * steps_per_epoch].mean() <= threshold:
            return e + 1
    return None


def write_training_report(history, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(REPORT_HEADER)
        for h in history:
            w.writerow([h.step, *(repr(v) for v in h.row()[1:])])
