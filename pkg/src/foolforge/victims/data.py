"""Datasets: a seeded procedural shapes generator and CIFAR-10 binary ingestion."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from foolforge.autodiff.serialize import load_bundle, save_bundle

CLASS_NAMES = (
    "circle",
    "square",
    "triangle",
    "star",
    "hstripes",
    "vstripes",
    "checker",
    "ring",
    "cross",
    "dstripes",
)
# The star class plays the role of 'starfish': visually distinct from the rest.
STAR_CLASS = CLASS_NAMES.index("star")
IMAGE_SIZE = 32


@dataclass
class DatasetSplit:
    images: np.ndarray  # [N, 3, H, W] in [0, 1]
    labels: np.ndarray  # [N] ints
    split: str = "train"
    num_classes: int = len(CLASS_NAMES)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4 or self.images.shape[0] != self.labels.shape[0]:
            raise ValueError(f"images {self.images.shape} and labels {self.labels.shape} disagree")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        if self.images.size and (self.images.min() < 0 or self.images.max() > 1):
            raise ValueError("images must lie in [0, 1]")

    def __len__(self):
        return len(self.labels)

    def subset(self, idx):
        return DatasetSplit(self.images[idx], self.labels[idx], self.split, self.num_classes)

    def fingerprint(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.images, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.labels, dtype="<i8").tobytes())
        return h.hexdigest()[:16]


# -- procedural rendering -------------------------------------------------------

def _grid(size):
    c = np.arange(size) + 0.5
    return np.meshgrid(c, c, indexing="xy")  # x (columns), y (rows)


def _in_polygon(x, y, vx, vy):
    """Even-odd rule for pixel centres against polygon vertices."""
    inside = np.zeros(x.shape, dtype=bool)
    j = len(vx) - 1
    for i in range(len(vx)):
        crosses = (vy[i] > y) != (vy[j] > y)
        xint = (vx[j] - vx[i]) * (y - vy[i]) / (vy[j] - vy[i] + 1e-12) + vx[i]
        inside ^= crosses & (x < xint)
        j = i
    return inside


def _regular_polygon(cx, cy, radii, rot):
    k = len(radii)
    ang = rot + 2 * np.pi * np.arange(k) / k
    return cx + radii * np.cos(ang), cy + radii * np.sin(ang)


def _shape_mask(kind, x, y, rng, size):
    cx, cy = rng.uniform(0.36 * size, 0.64 * size, 2)
    r = rng.uniform(0.25 * size, 0.36 * size)
    rot = rng.uniform(0, 2 * np.pi)
    dx, dy = x - cx, y - cy
    u = np.cos(rot) * dx + np.sin(rot) * dy
    v = -np.sin(rot) * dx + np.cos(rot) * dy
    dist = np.hypot(dx, dy)
    if kind == "circle":
        return dist < r
    if kind == "ring":
        return (dist < r) & (dist > 0.55 * r)
    if kind == "square":
        return (np.abs(u) < 0.7 * r) & (np.abs(v) < 0.7 * r)
    if kind == "cross":
        w = 0.28 * r
        return ((np.abs(u) < w) & (np.abs(v) < r)) | ((np.abs(v) < w) & (np.abs(u) < r))
    if kind == "triangle":
        return _in_polygon(x, y, *_regular_polygon(cx, cy, np.full(3, r), rot))
    if kind == "star":
        radii = np.tile([r, 0.38 * r], 5)
        return _in_polygon(x, y, *_regular_polygon(cx, cy, radii, rot))
    period = rng.uniform(4.0, 9.0)
    phase = rng.uniform(0, period)
    if kind == "hstripes":
        return ((y + phase) % period) < period / 2
    if kind == "vstripes":
        return ((x + phase) % period) < period / 2
    if kind == "dstripes":
        sign = rng.choice([-1.0, 1.0])
        return ((x + sign * y + phase) / np.sqrt(2) % period) < period / 2
    if kind == "checker":
        return ((((x + phase) // (period / 2)) + ((y + phase) // (period / 2))) % 2) == 0
    raise ValueError(f"unknown shape kind {kind!r}")


def _contrasting_colors(rng):
    while True:
        bg, fg = rng.uniform(0, 1, 3), rng.uniform(0, 1, 3)
        if np.abs(bg - fg).sum() > 0.9:
            return bg, fg


def render_shape(label, rng, size=IMAGE_SIZE, noise=0.03):
    x, y = _grid(size)
    mask = _shape_mask(CLASS_NAMES[label], x, y, rng, size)
    bg, fg = _contrasting_colors(rng)
    img = np.where(mask[None], fg[:, None, None], bg[:, None, None])
    img = img + rng.normal(0.0, noise, img.shape)
    return np.clip(img, 0.0, 1.0)


def synthetic_shapes(n, seed, split="train", size=IMAGE_SIZE):
    """Balanced, shuffled procedural dataset; fully determined by (n, seed, split)."""
    stream = {"train": 0, "val": 1, "test": 2}.get(split, 3)
    rng = np.random.default_rng([seed, stream])
    labels = rng.permutation(np.arange(n) % len(CLASS_NAMES))
    images = np.stack([render_shape(int(lab), rng, size) for lab in labels]) if n else np.zeros((0, 3, size, size))
    return DatasetSplit(images, labels, split)


def make_synthetic_dataset(n_train, n_val, seed):
    return synthetic_shapes(n_train, seed, "train"), synthetic_shapes(n_val, seed, "val")


def save_dataset(path, split):
    save_bundle(
        path,
        "dataset",
        {"split": split.split, "num_classes": split.num_classes, "fingerprint": split.fingerprint()},
        {"images": split.images, "labels": split.labels.astype(np.float64)},
    )


def load_dataset(path):
    header, tensors = load_bundle(path, kind="dataset")
    return DatasetSplit(tensors["images"], tensors["labels"].astype(np.int64), header["split"], header["num_classes"])


# -- CIFAR-10 -------------------------------------------------------------------

CIFAR_RECORD = 3073


def read_cifar10_batch(path, split="train"):
    """Read a CIFAR-10 binary batch: records of 1 label byte + 3072 pixel bytes (R, G, B planes)."""
    raw = np.frombuffer(Path(path).read_bytes(), dtype=np.uint8)
    if raw.size % CIFAR_RECORD:
        raise ValueError(f"{path}: size {raw.size} is not a multiple of {CIFAR_RECORD}")
    rec = raw.reshape(-1, CIFAR_RECORD)
    labels = rec[:, 0].astype(np.int64)
    images = rec[:, 1:].reshape(-1, 3, 32, 32).astype(np.float64) / 255.0
    return DatasetSplit(images, labels, split)


def load_cifar10(directory):
    directory = Path(directory)
    train_files = sorted(directory.glob("data_batch_*.bin"))
    if not train_files:
        raise FileNotFoundError(f"no data_batch_*.bin files in {directory}")
    parts = [read_cifar10_batch(p) for p in train_files]
    train = DatasetSplit(np.concatenate([p.images for p in parts]), np.concatenate([p.labels for p in parts]), "train")
    val = read_cifar10_batch(directory / "test_batch.bin", "val")
    return train, val
