"""Command-line entry point: ``foolforge <subcommand> [options]``.

Every subcommand resolves and validates its settings before touching any
output, refuses to write into a non-empty directory unless ``--force`` is
given, and leaves a ``manifest-<subcommand>.json`` next to what it wrote.
Failures print one JSON object on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
import threading
from pathlib import Path

from foolforge.autodiff.serialize import FormatError
from foolforge.autodiff.tensor import ShapeError
from foolforge.cli import stages
from foolforge.cli.config import ConfigError, Settings
from foolforge.cli.manifest import RunManifest
from foolforge.cli.pipeline import run_pipeline
from foolforge.evaluation import REPORT_HEADER, baseline_fgsm_targeted, evaluate_attack, write_report_csv
from foolforge.fooling import export_png
from foolforge.ftn import load_ftn, save_ftn, write_training_report
from foolforge.oracle import OracleClient, OracleServer, OracleStartupError
from foolforge.victims import load_checkpoint

log = logging.getLogger("foolforge")

EXIT_USAGE = 2
EXIT_FAILURE = 1


class CommandError(RuntimeError):
    def __init__(self, key, message):
        super().__init__(message)
        self.key = key


# -- helpers -------------------------------------------------------------------

def _fresh_dir(path, force):
    path = Path(path)
    if path.exists() and not path.is_dir():
        raise CommandError("out", f"{path} exists and is not a directory")
    if path.is_dir() and any(path.iterdir()) and not force:
        raise CommandError("out", f"{path} is not empty; pass --force to overwrite")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _existing(path, key):
    if path is None or not Path(path).exists():
        raise CommandError(key, f"missing input {path}")
    return Path(path)


def _load_victim(path, key="victim"):
    return load_checkpoint(_existing(path, key))


def _load_zoo(directory, names):
    directory = _existing(directory, "zoo")
    out = {}
    for name in names:
        ckpt = directory / f"{name}.ffck"
        if not ckpt.is_file():
            raise CommandError("zoo", f"missing checkpoint {ckpt}")
        out[name] = load_checkpoint(ckpt)
    return out


def _flags(args):
    """Map parsed arguments onto (section, key) settings; unset flags stay out."""
    table = {
        "seed": ("run", "seed"),
        "out": ("run", "out"),
        "profile": ("run", "profile"),
        "workers": ("run", "workers"),
        "n_train": ("dataset", "n_train"),
        "n_val": ("dataset", "n_val"),
        "arch": ("victim", "arch"),
        "epochs": ("victim", "epochs"),
        "methods": ("fooling", "methods"),
        "steps": ("fooling", "steps"),
        "count": ("fooling", "count"),
        "target": ("fooling", "target"),
        "ftn_epochs": ("ftn", "epochs"),
        "gamma": ("ftn", "gamma"),
        "n": ("attack", "n"),
        "victims": ("evaluate", "victims"),
        "host": ("oracle", "host"),
        "port": ("oracle", "port"),
    }
    flags = {}
    for attr, key in table.items():
        value = getattr(args, attr, None)
        if value is not None:
            flags[key] = value
    if getattr(args, "synthetic", False):
        flags[("dataset", "source")] = "synthetic"
    if getattr(args, "cifar", None):
        flags[("dataset", "source")] = "cifar"
        flags[("dataset", "cifar_dir")] = args.cifar
    if getattr(args, "no_oracle", False):
        flags[("evaluate", "oracle")] = False
    return flags


# -- subcommands -----------------------------------------------------------------

def cmd_dataset(args, settings, manifest, out):
    train, val = stages.build_dataset(settings.section("dataset"), settings.get("run", "seed"))
    for p in stages.write_dataset(train, val, out):
        manifest.add_output(p)


def cmd_train_victim(args, settings, manifest, out):
    data = _existing(args.data, "data")
    train, val = stages.read_dataset(data)
    manifest.add_input(data)
    cfg = settings.section("victim")
    zoo, paths = stages.train_zoo(cfg, train, val, settings.get("run", "seed"), out, settings.get("run", "workers"))
    for name, model in zoo.items():
        log.info("%s: val accuracy %.4f", name, model.metrics.get("val_accuracy", float("nan")))
    for p in paths:
        manifest.add_output(p)


def cmd_gen_fooling(args, settings, manifest, out):
    victim = _load_victim(args.victim)
    manifest.add_input(args.victim)
    cfg = settings.section("fooling")
    sets = stages.generate_fooling_sets(cfg, victim, settings.get("run", "seed"), settings.get("run", "workers"))
    for method, images in sets.items():
        for p in stages.write_fooling_set(images, out / method):
            manifest.add_output(p)
        if args.png:
            for i, fi in enumerate(images):
                export_png(fi.image, out / method / f"{i:03d}.png")
        log.info("%s: min confidence %.4f", method, min(f.confidence for f in images))


def cmd_train_ftn(args, settings, manifest, out):
    victim = _load_victim(args.victim)
    fooling = stages.read_fooling_set(_existing(args.fooling, "fooling"))
    train, _ = stages.read_dataset(_existing(args.data, "data"))
    for p in (args.victim, args.fooling, args.data):
        manifest.add_input(p)
    model, history = stages.fit_ftn(settings.section("ftn"), victim, fooling, train, settings.get("run", "seed"))
    save_ftn(model, out / "ftn.ffck")
    write_training_report(history, out / "losses.csv")
    manifest.add_output(out / "ftn.ffck")
    manifest.add_output(out / "losses.csv")


def cmd_attack(args, settings, manifest, out):
    _, val = stages.read_dataset(_existing(args.data, "data"))
    manifest.add_input(args.data)
    target = settings.get("fooling", "target")
    sources = stages.attack_sources(val, target, settings.get("attack", "n"))
    if args.ftn:
        model = load_ftn(_existing(args.ftn, "ftn"))
        manifest.add_input(args.ftn)
        adv = stages.apply_ftn(model, sources)
    elif args.victim:
        victim = _load_victim(args.victim)
        manifest.add_input(args.victim)
        acfg = settings.section("attack")
        eps = args.epsilon if args.epsilon is not None else acfg["fgsm_epsilon"]
        adv = baseline_fgsm_targeted(victim, sources, target, eps, acfg["fgsm_steps"])
    else:
        raise CommandError("ftn", "attack needs --ftn CHECKPOINT or --victim CHECKPOINT (FGSM baseline)")
    manifest.add_output(stages.write_images(out / "sources.fftn", sources))
    manifest.add_output(stages.write_images(out / "adv.fftn", adv))


def cmd_evaluate(args, settings, manifest, out):
    ecfg = settings.section("evaluate")
    adv = stages.read_images(_existing(args.adv, "adv"))
    sources = stages.read_images(_existing(args.sources, "sources"))
    if adv.shape != sources.shape:
        raise CommandError("adv", f"adversarial images {adv.shape} and sources {sources.shape} differ in shape")
    victims = _load_zoo(args.zoo, ecfg["victims"])
    for p in (args.adv, args.sources):
        manifest.add_input(p)
    for name in victims:
        manifest.add_input(Path(args.zoo) / f"{name}.ffck")
    oracle = OracleClient(args.oracle_url) if args.oracle_url and ecfg["oracle"] else None
    report = evaluate_attack(
        adv,
        sources,
        victims,
        settings.get("fooling", "target"),
        method=args.method,
        seed=settings.get("run", "seed"),
        oracle=oracle,
        workers=settings.get("run", "workers"),
    )
    write_report_csv([report], out / "report.csv")
    manifest.add_output(out / "report.csv")


def cmd_report(args, settings, manifest, out):
    header = ",".join(REPORT_HEADER)
    lines = [header]
    for path in args.inputs:
        text = _existing(path, "inputs").read_text().splitlines()
        if not text or text[0] != header:
            raise CommandError("inputs", f"{path} does not start with the report header")
        lines += text[1:]
        manifest.add_input(path)
    body = "\n".join(lines) + "\n"
    (out / "report.csv").write_text(body)
    manifest.add_output(out / "report.csv")
    sys.stdout.write(body)


def cmd_pipeline(args, settings, manifest, out):
    run_pipeline(settings, out, manifest)


def cmd_serve_oracle(args, settings):
    """Blocks until interrupted; prints the bound URL as one JSON line first."""
    victim = _load_victim(args.victim)
    ocfg = settings.section("oracle")
    server = OracleServer(victim, ocfg["host"], ocfg["port"])
    print(json.dumps({"url": server.url, "model": victim.spec.name}), flush=True)
    signal.signal(signal.SIGTERM, lambda *_: threading.Thread(target=server.shutdown).start())
    server.serve_forever()


COMMANDS = {
    "dataset": cmd_dataset,
    "train-victim": cmd_train_victim,
    "gen-fooling": cmd_gen_fooling,
    "train-ftn": cmd_train_ftn,
    "attack": cmd_attack,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "pipeline": cmd_pipeline,
}


# -- parser ----------------------------------------------------------------------

def _common(p):
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--profile", choices=("smoke", "full"), help="built-in defaults to start from")
    p.add_argument("--config", help="INI settings file")
    p.add_argument("--workers", type=int, help="parallel jobs")
    p.add_argument("--force", action="store_true", help="allow writing into a non-empty output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="foolforge", description="Fooling images and fooling transfer networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dataset", help="write train/val dataset files")
    _common(p)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--synthetic", action="store_true", help="procedural shapes (default)")
    src.add_argument("--cifar", metavar="DIR", help="directory of CIFAR-10 binary batches")
    p.add_argument("--n-train", dest="n_train", type=int)
    p.add_argument("--n-val", dest="n_val", type=int)

    p = sub.add_parser("train-victim", help="train one architecture or the whole zoo")
    _common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--arch", help="architecture name or 'all'")
    p.add_argument("--epochs", type=int)

    p = sub.add_parser("gen-fooling", help="generate fooling images against a victim")
    _common(p)
    p.add_argument("--victim", required=True, help="victim checkpoint")
    p.add_argument("--methods", help="comma-separated methods")
    p.add_argument("--steps", type=int)
    p.add_argument("--count", type=int)
    p.add_argument("--target", type=int)
    p.add_argument("--png", action="store_true", help="also export PNGs")

    p = sub.add_parser("train-ftn", help="train a fooling transfer network")
    _common(p)
    p.add_argument("--victim", required=True)
    p.add_argument("--fooling", required=True, help="directory of fooling images for the bank")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", dest="ftn_epochs", type=int)
    p.add_argument("--gamma", type=float)

    p = sub.add_parser("attack", help="turn validation images into adversarial examples")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--ftn", help="transfer network checkpoint")
    p.add_argument("--victim", help="victim checkpoint for the FGSM baseline")
    p.add_argument("--epsilon", type=float, help="FGSM budget in [0,1] units")
    p.add_argument("--n", type=int, help="number of source images")
    p.add_argument("--target", type=int)

    p = sub.add_parser("serve-oracle", help="serve a victim as a label-and-score HTTP service")
    _common(p)
    p.add_argument("--checkpoint", "--victim", dest="victim", required=True, help="classifier checkpoint to serve")
    p.add_argument("--host")
    p.add_argument("--port", type=int)

    p = sub.add_parser("evaluate", help="score adversarial images against the zoo and the oracle")
    _common(p)
    p.add_argument("--adv", required=True)
    p.add_argument("--sources", required=True)
    p.add_argument("--zoo", required=True, help="directory of victim checkpoints")
    p.add_argument("--victims", help="comma-separated victim names")
    p.add_argument("--oracle-url", dest="oracle_url", help="base URL of a running oracle")
    p.add_argument("--no-oracle", dest="no_oracle", action="store_true")
    p.add_argument("--method", default="attack", help="label for the method column")
    p.add_argument("--target", type=int)

    p = sub.add_parser("report", help="merge report CSVs under the standard header")
    _common(p)
    p.add_argument("inputs", nargs="+")
    p.add_argument("--format", choices=("csv",), default="csv")

    p = sub.add_parser("pipeline", help="run the whole experiment")
    _common(p)
    return parser


def _fail(command, key, exc):
    record = {"error": type(exc).__name__, "key": key, "message": str(exc).replace("\n", " ")}
    if command:
        record["command"] = command
    sys.stderr.write(json.dumps(record, sort_keys=True) + "\n")


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    command = args.command
    try:
        settings = Settings(_flags(args), args.config)
        resolved = settings.validate()
        if command == "serve-oracle":
            cmd_serve_oracle(args, settings)
            return 0
        out = _fresh_dir(settings.get("run", "out"), args.force)
        manifest = RunManifest(command, resolved, {"seed": settings.get("run", "seed")})
        COMMANDS[command](args, settings, manifest, out)
        manifest.write(out)
    except ConfigError as e:
        _fail(command, e.key, e)
        return EXIT_USAGE
    except CommandError as e:
        _fail(command, e.key, e)
        return EXIT_FAILURE
    except (FileNotFoundError, FormatError, ShapeError, OracleStartupError, KeyError, ValueError, OSError) as e:
        _fail(command, getattr(e, "filename", None), e)
        return EXIT_FAILURE
    except KeyboardInterrupt:
        return 130
    return 0


if __name__ == "__main__":
    sys.exit(main())
