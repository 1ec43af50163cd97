"""End-to-end experiment: zoo, fooling sets, transfer networks, attacks, reports."""

from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np

from foolforge.cli import stages
from foolforge.evaluation import evaluate_attack, representation_stats, write_report_csv, write_series_csv
from foolforge.fooling import high_freq_energy, radial_power_spectrum
from foolforge.ftn import save_ftn, write_training_report
from foolforge.oracle import OracleClient, OracleServer
from foolforge.victims import ORACLE_ARCHITECTURE, TRAINING_VICTIM

log = logging.getLogger(__name__)

LOW_FREQUENCY_METHODS = ("dr", "trdr", "cppn_grad")


def _fmt(x):
    return "n/a" if x is None else f"{x:.6f}"


def _write_rows(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def run_pipeline(settings, out, manifest):
    out = Path(out)
    seed = settings.get("run", "seed")
    workers = settings.get("run", "workers")
    vcfg, fcfg, tcfg = settings.section("victim"), settings.section("fooling"), settings.section("ftn")
    acfg, ecfg = settings.section("attack"), settings.section("evaluate")
    target = fcfg["target"]

    train, val = stages.build_dataset(settings.section("dataset"), seed)
    for p in stages.write_dataset(train, val, out / "data"):
        manifest.add_output(p)

    vcfg = dict(vcfg, arch="all")
    zoo, paths = stages.train_zoo(vcfg, train, val, seed, out / "zoo", workers)
    for p in paths:
        manifest.add_output(p)
    trainer = zoo[fcfg["victim"] or TRAINING_VICTIM]
    held_out = {name: zoo[name] for name in ecfg["victims"]}

    tables = out / "tables"
    plots = out / "plots"
    reports = []
    server = OracleServer(zoo[ORACLE_ARCHITECTURE]).start() if ecfg["oracle"] else None
    try:
        oracle = OracleClient(server.url) if server else None
        columns = list(held_out) + (["oracle"] if oracle else [])

        # fooling images and their direct transfer
        sets = stages.generate_fooling_sets(fcfg, trainer, seed, workers)
        transfer_rows = []
        for method, images in sets.items():
            for p in stages.write_fooling_set(images, out / "fooling" / method):
                manifest.add_output(p)
            x = np.stack([f.image for f in images])
            rep = evaluate_attack(x, x, held_out, target, method=f"fooling-{method}", seed=seed, oracle=oracle)
            reports.append(rep)
            rates = [rep.rate(c) for c in columns]
            hf = float(np.mean([high_freq_energy(f.image) for f in images]))
            transfer_rows.append([method, *map(_fmt, rates), _fmt(float(np.mean(rates[: len(held_out)]))), _fmt(hf)])
            trace = np.mean([f.trace[: min(len(g.trace) for g in images)] for f in images], axis=0)
            write_series_csv(plots / f"trace_{method}.csv", ("step", "confidence"), range(len(trace)), trace)
            freqs, power = radial_power_spectrum(x.mean(axis=0))
            write_series_csv(plots / f"spectrum_{method}.csv", ("frequency", "power"), freqs, power)
        _write_rows(
            tables / "fooling_transfer.csv",
            ["method", *columns, "mean_held_out", "high_freq_energy"],
            transfer_rows,
        )

        # representation statistics: low-frequency versus naive fooling images
        low = [f.image for m in LOW_FREQUENCY_METHODS if m in sets for f in sets[m]]
        if low and "naive" in sets:
            groups = {"low-frequency": np.stack(low), "naive": np.stack([f.image for f in sets["naive"]])}
            _, scores = representation_stats(trainer, groups)
            _write_rows(tables / "separation.csv", ["tap", "separation_score"], [[t, _fmt(s)] for t, s in scores.items()])

        # one transfer network per fooling method
        sources = stages.attack_sources(val, target, acfg["n"])
        stages.write_images(out / "adv" / "sources.fftn", sources)
        ftn_rows = []
        ftn_rmsd = {}
        for method, images in sets.items():
            model, history = stages.fit_ftn(tcfg, trainer, images, train, seed)
            save_ftn(model, out / "ftn" / f"{method}.ffck")
            write_training_report(history, out / "ftn" / f"{method}-losses.csv")
            write_series_csv(plots / f"loss_{method}.csv", ("step", "loss_total"), [h.step for h in history], [h.total for h in history])
            adv = stages.apply_ftn(model, sources)
            stages.write_images(out / "adv" / f"ftn-{method}.fftn", adv)
            rep = evaluate_attack(adv, sources, held_out, target, method=f"ftn-{method}", seed=seed, oracle=oracle)
            reports.append(rep)
            ftn_rmsd[method] = rep.rows[0].rmsd
            ftn_rows += [[method, r.victim, _fmt(r.transfer_rate), _fmt(r.rmsd), _fmt(r.rtd)] for r in rep.rows]
        _write_rows(tables / "ftn_transfer.csv", ["bank", "victim", "transfer_rate", "rmsd", "rtd"], ftn_rows)

        # single-image baseline at the distortion of the strongest-prior FTN
        ref = "cppn_grad" if "cppn_grad" in ftn_rmsd else next(iter(ftn_rmsd))
        adv_fgsm, eps, _ = stages.fgsm_matched(trainer, sources, target, ftn_rmsd[ref], acfg["fgsm_steps"])
        stages.write_images(out / "adv" / "fgsm.fftn", adv_fgsm)
        rep = evaluate_attack(adv_fgsm, sources, held_out, target, method="fgsm", seed=seed, oracle=oracle)
        reports.append(rep)
        baseline = [r for r in reports if r.rows[0].method in (f"ftn-{ref}", "fgsm")]
        write_report_csv(baseline, tables / "baselines.csv")
        _write_rows(tables / "fgsm_epsilon.csv", ["reference", "epsilon"], [[ref, _fmt(eps)]])
    finally:
        if server:
            server.stop()

    write_report_csv(reports, out / "report.csv")
    for p in sorted(tables.glob("*.csv")) + sorted(plots.glob("*.csv")) + [out / "report.csv"]:
        manifest.add_output(p)
    for p in sorted((out / "ftn").glob("*")) + sorted((out / "adv").glob("*")):
        manifest.add_output(p)
    return out / "report.csv"
