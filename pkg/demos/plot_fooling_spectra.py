"""
Fooling images and where their energy sits
==========================================

Trains a small victim on the synthetic shapes data, asks every gradient
generator for an image the victim labels "star", and compares how much
spectral power each image keeps above a quarter of the sampling rate.
Unconstrained pixel ascent leaves broadband noise; the robust, Fourier and
CPPN generators land on smoother patterns.

Takes a few minutes on one core. Pass a directory to also get PNGs
(requires Pillow).
"""
import sys
from pathlib import Path

import numpy as np

from foolforge.fooling import FoolingConfig, export_png, generate, high_freq_energy, radial_power_spectrum
from foolforge.victims import CLASS_NAMES, STAR_CLASS, TrainConfig, get_architecture, make_synthetic_dataset, train_classifier

out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else None

###############################################################################
# A victim to fool
# ----------------
# Ten procedurally drawn shape classes at 32x32. A handful of epochs gets
# the plain network most of the way.

train, val = make_synthetic_dataset(2000, 300, seed=0)
victim = train_classifier(get_architecture("plain-cnn"), train, val, TrainConfig(epochs=6), seed=0)
print(f"victim accuracy {victim.metrics['val_accuracy']:.3f}; target class {CLASS_NAMES[STAR_CLASS]!r}")

###############################################################################
# One image per generator
# -----------------------
# Same seed and budget everywhere so the comparison is like for like.

rows = []
for method in ("naive", "tr", "dr", "trdr", "cppn_grad"):
    fool = generate(victim, FoolingConfig(method=method, steps=64, seed=1))[0]
    _, spectrum = radial_power_spectrum(fool.image)
    rows.append((method, fool.confidence, high_freq_energy(fool.image), spectrum))
    if out_dir is not None:
        export_png(fool.image, out_dir / f"{method}.png")

print(f"{'method':<10} {'P(star)':>8} {'hf energy':>10}")
for method, conf, hf, _ in rows:
    print(f"{method:<10} {conf:8.4f} {hf:10.3f}")

###############################################################################
# Radial spectra
# --------------
# Log power per integer radius, low to high frequency. The naive row stays
# flat out to the corner; the others fall away.

for method, _, _, spectrum in rows:
    print(f"{method:<10}", " ".join(f"{v:5.1f}" for v in np.log10(spectrum + 1e-12)[::2]))
