"""Attack reports: one row per victim, plus CSV emission."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from foolforge.evaluation.metrics import rmsd, rtd, top1_labels

REPORT_HEADER = ("method", "victim", "n", "target", "transfer_rate", "rmsd", "rtd", "seed")


@dataclass(frozen=True)
class ReportRow:
    method: str
    victim: str
    n: int
    target: int
    transfer_rate: float
    rmsd: float
    rtd: float | None
    seed: int

    def cells(self):
        rtd_cell = "n/a" if self.rtd is None else f"{self.rtd:.6f}"
        return [self.method, self.victim, self.n, self.target, f"{self.transfer_rate:.6f}", f"{self.rmsd:.6f}", rtd_cell, self.seed]


@dataclass
class AttackReport:
    rows: list
    provenance: dict = field(default_factory=dict)

    def rate(self, victim):
        for r in self.rows:
            if r.victim == victim:
                return r.transfer_rate
        raise KeyError(victim)

    def to_csv(self, header=True):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(REPORT_HEADER)
        for r in self.rows:
            w.writerow(r.cells())
        return buf.getvalue()


def evaluate_attack(adv, sources, victims, target, method="", seed=0, oracle=None, workers=4, provenance=None):
    """Score adversarial images against named victims (dict name -> victim) and an optional oracle.

    Inference fans out over threads; rows keep the declaration order, oracle last.
    """
    adv = np.asarray(adv, dtype=np.float64)
    distortion = rmsd(adv, sources)
    named = list(victims.items())
    if oracle is not None:
        named.append(("oracle", oracle))
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        labels = list(pool.map(lambda nv: top1_labels(nv[1], adv), named))
    rows = []
    for (name, _), lab in zip(named, labels):
        rate = float((lab == target).mean())
        rows.append(ReportRow(method, name, len(adv), int(target), rate, distortion, rtd(rate, distortion), int(seed)))
    return AttackReport(rows, dict(provenance or {}))


def write_report_csv(reports, path):
    """Concatenate reports under the single standard header."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(",".join(REPORT_HEADER) + "\n")
        for rep in reports:
            f.write(rep.to_csv(header=False))


def write_series_csv(path, header, xs, ys):
    """Two-column plot-data file."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for x, y in zip(xs, ys):
            w.writerow([x, repr(float(y))])
