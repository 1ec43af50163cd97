"""Channel-statistics summaries of victim activations and a group separation score."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from foolforge.victims.zoo import activations, representation_taps


@dataclass
class StatsSummary:
    tap: str
    group: str
    mean: np.ndarray  # per channel, over images and positions
    var: np.ndarray

    def __post_init__(self):
        if (self.var < 0).any():
            raise ValueError("variance must be non-negative")


def channel_stat_vectors(acts):
    """[N,C,h,w] activations -> [N, 2C] rows of (channel mean, channel variance)."""
    a = np.asarray(acts, dtype=np.float64)
    flat = a.reshape(a.shape[0], a.shape[1], -1)
    return np.concatenate([flat.mean(axis=2), flat.var(axis=2)], axis=1)


def separation_score(groups):
    """Mean inter-group distance over mean intra-group distance.

    ``groups`` maps a name to an [n, k] array of per-sample vectors. Intra-group
    pairs include each sample with itself, so coinciding groups score exactly 1.
    """
    names = list(groups)
    if len(names) < 2:
        raise ValueError("need at least two groups")
    vecs = [np.asarray(groups[k], dtype=np.float64) for k in names]
    intra_sum = intra_n = inter_sum = inter_n = 0.0
    for i, a in enumerate(vecs):
        for j, b in enumerate(vecs):
            d = cdist(a, b)
            if i == j:
                intra_sum, intra_n = intra_sum + d.sum(), intra_n + d.size
            else:
                inter_sum, inter_n = inter_sum + d.sum(), inter_n + d.size
    intra = intra_sum / intra_n
    inter = inter_sum / inter_n
    if intra == 0:
        return 1.0 if inter == 0 else float("inf")
    return float(inter / intra)


def representation_stats(victim, image_groups, taps=None):
    """Summaries per (tap, group) and a separation score per tap.

    ``image_groups`` maps a group tag (e.g. "low-frequency", "naive") to images [n,3,H,W].
    """
    taps = tuple(taps) if taps else representation_taps(victim.spec)
    summaries, scores = [], {}
    for tap in taps:
        vectors = {}
        for group, images in image_groups.items():
            acts = activations(victim, images, tap)
            flat = acts.transpose(1, 0, 2, 3).reshape(acts.shape[1], -1)
            summaries.append(StatsSummary(tap, group, flat.mean(axis=1), flat.var(axis=1)))
            vectors[group] = channel_stat_vectors(acts)
        scores[tap] = separation_score(vectors)
    return summaries, scores
