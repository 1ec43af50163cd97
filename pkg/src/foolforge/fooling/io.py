"""Persistence for fooling images: tensor file, key = value sidecar, trace CSV, PNG."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from foolforge.autodiff.serialize import load_tensor, save_tensor
from foolforge.fooling.generators import FoolingImage


def save_fooling_image(fi, stem):
    """Writes ``stem.fftn``, ``stem.meta`` and ``stem.trace.csv``; returns the paths."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    paths = [stem.with_suffix(".fftn"), stem.with_suffix(".meta"), stem.with_suffix(".trace.csv")]
    save_tensor(paths[0], fi.image)
    paths[1].write_text(
        f"method = {fi.method}\ntarget = {fi.target}\nconfidence = {fi.confidence!r}\n"
        f"seed = {fi.seed}\nshape = {','.join(map(str, fi.image.shape))}\n"
    )
    with open(paths[2], "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "confidence"])
        w.writerows((i, repr(c)) for i, c in enumerate(fi.trace))
    return paths


def load_fooling_image(stem):
    stem = Path(stem)
    meta = {}
    for line in stem.with_suffix(".meta").read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            meta[k.strip()] = v.strip()
    with open(stem.with_suffix(".trace.csv"), newline="") as f:
        rows = list(csv.DictReader(f))
    return FoolingImage(
        load_tensor(stem.with_suffix(".fftn")),
        meta["method"],
        int(meta["target"]),
        float(meta["confidence"]),
        [float(r["confidence"]) for r in rows],
        int(meta["seed"]),
    )


def export_png(image, path):
    """Write a [3, H, W] image in [0, 1] as 8-bit PNG (needs Pillow)."""
    from PIL import Image

    arr = np.clip(np.rint(np.asarray(image).transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)
