"""Run manifests: what ran, with which settings, reading and writing which files."""

from __future__ import annotations

import json
import platform
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from foolforge.autodiff.serialize import sha256_file


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _version():
    try:
        return metadata.version("foolforge")
    except metadata.PackageNotFoundError:
        return "unknown"


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    seeds: dict
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    started: str = field(default_factory=_now)
    finished: str | None = None

    def add_input(self, path):
        self._add(self.inputs, path)

    def add_output(self, path):
        self._add(self.outputs, path)

    @staticmethod
    def _add(target, path):
        path = Path(path)
        files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
        for p in files:
            target.append({"path": str(p), "sha256": sha256_file(p)})

    def to_dict(self):
        return {
            "subcommand": self.subcommand,
            "config": self.config,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "started": self.started,
            "finished": self.finished,
            "versions": {
                "foolforge": _version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": platform.python_version(),
            },
        }

    def write(self, directory):
        self.finished = _now()
        path = Path(directory) / f"manifest-{self.subcommand}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path
