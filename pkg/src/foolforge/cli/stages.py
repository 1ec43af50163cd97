"""Pipeline stages shared by the subcommands and the end-to-end runner."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from foolforge.autodiff.serialize import load_tensor, save_tensor
from foolforge.evaluation import baseline_fgsm_targeted, rmsd
from foolforge.fooling import FoolingConfig, generate, load_fooling_image, save_fooling_image
from foolforge.ftn import FTNConfig, build_representation_bank, ftn_forward, train_ftn
from foolforge.victims import (
    STOCK_ARCHITECTURES,
    get_architecture,
    load_cifar10,
    load_dataset,
    make_synthetic_dataset,
    save_checkpoint,
    save_dataset,
    train_classifier,
)
from foolforge.victims.train import TrainConfig


def run_jobs(fn, items, workers=1):
    """Map ``fn`` over ``items`` on a thread pool; results keep input order."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# -- dataset -------------------------------------------------------------------

def build_dataset(cfg, seed):
    if cfg["source"] == "synthetic":
        return make_synthetic_dataset(cfg["n_train"], cfg["n_val"], seed)
    if cfg["source"] == "cifar":
        if not cfg["cifar_dir"]:
            raise FileNotFoundError("dataset.cifar_dir must name a directory of CIFAR-10 binary batches")
        return load_cifar10(cfg["cifar_dir"])
    raise ValueError(f"dataset.source must be 'synthetic' or 'cifar', got {cfg['source']!r}")


def write_dataset(train, val, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = [directory / "train.ffck", directory / "val.ffck"]
    save_dataset(paths[0], train)
    save_dataset(paths[1], val)
    return paths


def read_dataset(directory):
    directory = Path(directory)
    for name in ("train.ffck", "val.ffck"):
        if not (directory / name).is_file():
            raise FileNotFoundError(f"missing dataset file {directory / name}")
    return load_dataset(directory / "train.ffck"), load_dataset(directory / "val.ffck")


# -- victims -------------------------------------------------------------------

def train_config(cfg):
    return TrainConfig(
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        lr=cfg["lr"],
        lr_decay=cfg["lr_decay"],
        noise_std=cfg["noise_std"],
    )


def arch_list(name):
    return list(STOCK_ARCHITECTURES) if name == "all" else [name]


def train_zoo(cfg, train, val, seed, directory, workers=1):
    """Train each requested architecture; returns ({name: Classifier}, [paths])."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    hyper = train_config(cfg)
    names = arch_list(cfg["arch"])
    specs = [get_architecture(n) for n in names]
    models = run_jobs(lambda spec: train_classifier(spec, train, val, hyper, seed), specs, workers)
    paths = []
    for name, model in zip(names, models):
        paths.append(directory / f"{name}.ffck")
        save_checkpoint(model, paths[-1])
    return dict(zip(names, models)), paths


# -- fooling -------------------------------------------------------------------

def fooling_config(cfg, method, seed):
    return FoolingConfig(
        method=method,
        target=cfg["target"],
        steps=cfg["steps"],
        lr=cfg["lr"],
        rotation_deg=cfg["rotation_deg"],
        scale_range=(cfg["scale_lo"], cfg["scale_hi"]),
        jitter_px=cfg["jitter_px"],
        seed=seed,
        population=cfg["population"],
        elites=cfg["elites"],
        mutation_sigma=cfg["mutation_sigma"],
        structural_prob=cfg["structural_prob"],
    )


def generate_fooling_sets(cfg, victim, seed, workers=1):
    """{method: [FoolingImage]} for every configured method; one job per method."""
    methods = list(cfg["methods"])
    configs = [fooling_config(cfg, m, seed) for m in methods]  # validates before any work
    sets = run_jobs(lambda c: generate(victim, c, cfg["count"]), configs, workers)
    return dict(zip(methods, sets))


def write_fooling_set(images, directory):
    directory = Path(directory)
    paths = []
    for i, fi in enumerate(images):
        paths += save_fooling_image(fi, directory / f"{i:03d}")
    return paths


def read_fooling_set(directory):
    directory = Path(directory)
    stems = sorted(p.with_suffix("") for p in directory.glob("*.meta"))
    if not stems:
        raise FileNotFoundError(f"no fooling images (*.meta) in {directory}")
    return [load_fooling_image(s) for s in stems]


# -- transfer network ----------------------------------------------------------

def ftn_config(cfg, seed):
    return FTNConfig(
        enc_channels=tuple(cfg["enc_channels"]),
        enc_res_blocks=cfg["enc_res_blocks"],
        mlp_hidden=cfg["mlp_hidden"],
        gamma=cfg["gamma"],
        lam=cfg["lam"],
        batch_size=cfg["batch_size"],
        epochs=cfg["epochs"],
        steps_per_epoch=cfg["steps_per_epoch"],
        lr=cfg["lr"],
        use_adain=cfg["use_adain"],
        seed=seed,
    )


def fit_ftn(cfg, victim, fooling, train, seed):
    """Bank from the first N fooling images, then train; returns (model, history)."""
    config = ftn_config(cfg, seed)
    if len(fooling) < config.batch_size:
        raise ValueError(f"need {config.batch_size} fooling images for the bank, got {len(fooling)}")
    bank = build_representation_bank(victim, fooling[: config.batch_size])
    return train_ftn(config, victim, bank, train)


# -- attacks -------------------------------------------------------------------

def attack_sources(val, target, n):
    """The first ``n`` validation images whose true label is not the target."""
    idx = np.flatnonzero(val.labels != target)[:n]
    if not len(idx):
        raise ValueError("no validation images outside the target class")
    return val.images[idx]


def fgsm_matched(victim, sources, target, goal_rmsd, steps, tol=0.1, iters=30):
    """Bisect epsilon so the baseline's RMSD lands within ``tol`` of ``goal_rmsd``."""
    lo, hi = 0.0, 1.0
    best = None
    for _ in range(iters):
        eps = 0.5 * (lo + hi)
        adv = baseline_fgsm_targeted(victim, sources, target, eps, steps)
        d = rmsd(adv, sources)
        if best is None or abs(d - goal_rmsd) < abs(best[2] - goal_rmsd):
            best = (adv, eps, d)
        if abs(d - goal_rmsd) <= 0.25 * tol * goal_rmsd:
            break
        lo, hi = (eps, hi) if d < goal_rmsd else (lo, eps)
    return best


def write_images(path, images):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    save_tensor(path, np.asarray(images))
    return Path(path)


def read_images(path):
    if not Path(path).is_file():
        raise FileNotFoundError(f"missing image tensor {path}")
    return load_tensor(path)


def apply_ftn(model, sources):
    return ftn_forward(model, sources)
