"""
From fooling images to a universal attack
=========================================

A fooling transfer network learns one mapping that nudges any source image
toward the victim's internal picture of the target class, as summarized by a
small bank of fooling images. This script trains a reduced-size network
against a freshly trained victim, then scores the outputs on a second
architecture the network never saw, next to a gradient-sign baseline at the
same distortion.

Expect a few minutes on one core. The numbers are illustrative only; the
acceptance suite runs the full-size comparison over several seeds.
"""
import numpy as np

from foolforge.cli.stages import attack_sources, fgsm_matched
from foolforge.evaluation import rmsd, rtd
from foolforge.fooling import FoolingConfig, generate
from foolforge.ftn import SMOKE_FTN, build_representation_bank, ftn_forward, ssim, train_ftn
from foolforge.victims import STAR_CLASS, TrainConfig, get_architecture, make_synthetic_dataset, predict, train_classifier

train, val = make_synthetic_dataset(1500, 300, seed=0)
victim = train_classifier(get_architecture("plain-cnn"), train, val, TrainConfig(epochs=5), seed=0)
other = train_classifier(get_architecture("pool-heavy-cnn"), train, val, TrainConfig(epochs=5), seed=1)

###############################################################################
# The representation bank
# -----------------------
# Eight CPPN fooling images, pushed through the victim; their activations at
# the three deepest non-logit taps become the rows the network must match.

fool = generate(victim, FoolingConfig(method="cppn_grad", steps=64, seed=0), count=8)
bank = build_representation_bank(victim, fool)
print("bank taps", bank.taps, "row width", bank.features.shape[1])

###############################################################################
# Training
# --------
# Content (SSIM) keeps the source recognizable, the representation term pulls
# toward the bank, total variation discourages speckle.

cfg = SMOKE_FTN.replace(gamma=1e-5, lr=2e-4, epochs=1)
model, history = train_ftn(cfg, victim, bank, train)
print(f"{len(history)} steps; last content loss {history[-1].content:.3f}, representation {history[-1].rep:.0f}")

###############################################################################
# Scoring
# -------
# Transfer rate counts exact target hits among sources that were not stars to
# begin with.

sources = attack_sources(val, STAR_CLASS, 100)
adv = ftn_forward(model, sources)
dist = rmsd(adv, sources)
base, eps, base_dist = fgsm_matched(victim, sources, STAR_CLASS, dist, steps=10)

for name, x, d in (("ftn", adv, dist), ("fgsm", base, base_dist)):
    rate = float((predict(other, x).argmax(1) == STAR_CLASS).mean())
    score = rtd(rate, d)
    print(f"{name:<5} unseen-victim rate {rate:.2f}  rmsd {d:6.2f}  rtd {'n/a' if score is None else f'{score:.3f}'}")
print(f"mean ssim of ftn outputs to sources {ssim(adv, sources).item():.3f}; fgsm epsilon {eps:.3f}")
