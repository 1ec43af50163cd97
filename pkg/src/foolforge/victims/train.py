"""Seeded mini-batch training of victim classifiers."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from foolforge.autodiff import ops
from foolforge.autodiff.optim import OptimConfig, Optimizer
from foolforge.autodiff.tensor import NonFiniteError, Tensor, grad
from foolforge.victims.zoo import Classifier, accuracy, forward, init_params

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    def __init__(self, step, detail):
        super().__init__(f"training diverged at step {step}: {detail}")
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 12
    batch_size: int = 32
    lr: float = 4e-3
    lr_decay: float = 0.85  # multiplicative per epoch
    noise_std: float = 0.1  # additive Gaussian augmentation, per-image std drawn from U(0, noise_std)


def train_classifier(spec, train, val=None, hyper=TrainConfig(), seed=0):
    if spec.num_classes != train.num_classes:
        raise ValueError(f"{spec.name} has {spec.num_classes} outputs but data has {train.num_classes} classes")
    if not len(train):
        raise ValueError("training data is empty")
    rng = np.random.default_rng([seed, 17])
    params = {k: Tensor(v, requires_grad=True, name=k) for k, v in init_params(spec, rng).items()}
    names = list(params)
    opt = Optimizer([params[k] for k in names], OptimConfig("adam", lr=hyper.lr))
    aug_rng = np.random.default_rng([seed, 18])
    step = 0
    history = []
    for epoch in range(hyper.epochs):
        order = rng.permutation(len(train))
        losses = []
        for i in range(0, len(order), hyper.batch_size):
            idx = order[i : i + hyper.batch_size]
            try:
                x = train.images[idx]
                if hyper.noise_std > 0:
                    std = aug_rng.uniform(0.0, hyper.noise_std, (len(idx), 1, 1, 1))
                    x = np.clip(x + aug_rng.normal(0.0, 1.0, x.shape) * std, 0.0, 1.0)
                logits, _ = forward(spec, params, Tensor(x))
                loss = ops.cross_entropy(logits, train.labels[idx])
                grads = grad(loss, [params[k] for k in names])
                opt.step(grads)
            except NonFiniteError as e:
                raise TrainingDivergedError(step, str(e)) from e
            losses.append(loss.item())
            step += 1
        opt.config = OptimConfig("adam", lr=opt.config.lr * hyper.lr_decay)
        history.append(float(np.mean(losses)))
        log.info("%s epoch %d loss %.4f", spec.name, epoch, history[-1])
    clf = Classifier(
        spec,
        {k: p.data.copy() for k, p in params.items()},
        fingerprint={
            "dataset": train.fingerprint(),
            "seed": int(seed),
            "epochs": int(hyper.epochs),
            "hyper": asdict(hyper),
        },
    )
    clf.metrics = {
        "train_accuracy": accuracy(clf, train),
        "val_accuracy": accuracy(clf, val) if val is not None else None,
        "loss_history": history,
    }
    return clf
