"""Layered settings: command-line flag > FOOLFORGE_* environment > INI file > profile default."""

from __future__ import annotations

import configparser
import os
from pathlib import Path

ENV_PREFIX = "FOOLFORGE_"
PROFILES = ("smoke", "full")


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


def _bool(text):
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text):
    if isinstance(text, (tuple, list)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).split(",") if v.strip())


def _strs(text):
    if isinstance(text, (tuple, list)):
        return tuple(str(v) for v in text)
    return tuple(v.strip() for v in str(text).split(",") if v.strip())


def _opt_float(text):
    if text is None or str(text).strip().lower() in ("", "none", "default"):
        return None
    return float(text)


def _opt_int(text):
    if text is None or str(text).strip().lower() in ("", "none", "0"):
        return None
    return int(text)


# section -> key -> (converter, smoke default, full default)
SCHEMA = {
    "run": {
        "seed": (int, 0, 0),
        "out": (str, "foolforge-run", "foolforge-run"),
        "profile": (str, "smoke", "smoke"),
        "workers": (int, 1, 1),
    },
    "dataset": {
        "source": (str, "synthetic", "synthetic"),
        "cifar_dir": (str, "", ""),
        "n_train": (int, 600, 3000),
        "n_val": (int, 200, 600),
    },
    "victim": {
        "arch": (str, "all", "all"),
        "epochs": (int, 3, 12),
        "batch_size": (int, 32, 32),
        "lr": (float, 4e-3, 4e-3),
        "lr_decay": (float, 0.85, 0.85),
        "noise_std": (float, 0.1, 0.1),
    },
    "fooling": {
        "methods": (_strs, ("naive", "tr", "dr", "trdr", "cppn_grad", "cppn_ea"), ("naive", "tr", "dr", "trdr", "cppn_grad", "cppn_ea")),
        "target": (int, 3, 3),
        "steps": (int, 64, 512),
        "count": (int, 8, 8),
        "lr": (_opt_float, None, None),
        "rotation_deg": (float, 5.0, 5.0),
        "scale_lo": (float, 0.9, 0.9),
        "scale_hi": (float, 1.1, 1.1),
        "jitter_px": (float, 2.0, 2.0),
        "population": (int, 8, 32),
        "elites": (int, 2, 8),
        "mutation_sigma": (float, 0.1, 0.1),
        "structural_prob": (float, 0.05, 0.05),
        "victim": (str, "plain-cnn", "plain-cnn"),
    },
    "ftn": {
        "enc_channels": (_ints, (16, 32), (32, 64)),
        "enc_res_blocks": (int, 1, 2),
        "mlp_hidden": (int, 64, 128),
        "gamma": (float, 1e-5, 1e-5),
        "lam": (float, 1e-4, 1e-4),
        "batch_size": (int, 8, 8),
        "epochs": (int, 1, 4),
        "steps_per_epoch": (_opt_int, 8, None),
        "lr": (float, 2e-4, 2e-4),
        "use_adain": (_bool, True, True),
    },
    "attack": {
        "n": (int, 32, 200),
        "fgsm_steps": (int, 10, 10),
        "fgsm_epsilon": (float, 8 / 255, 8 / 255),
    },
    "evaluate": {
        "victims": (_strs, ("residual-cnn", "wide-cnn", "pool-heavy-cnn"), ("residual-cnn", "wide-cnn", "pool-heavy-cnn")),
        "oracle": (_bool, True, True),
    },
    "oracle": {
        "host": (str, "127.0.0.1", "127.0.0.1"),
        "port": (int, 8765, 8765),
    },
}


def env_name(section, key):
    return f"{ENV_PREFIX}{key.upper()}" if section == "run" else f"{ENV_PREFIX}{section.upper()}_{key.upper()}"


class Settings:
    """Resolves every (section, key) through the four layers; ``validate`` checks them all."""

    def __init__(self, flags=None, config_path=None, env=None):
        self.flags = {k: v for k, v in (flags or {}).items() if v is not None}
        self.env = dict(os.environ if env is None else env)
        self.config_path = config_path
        self.file = configparser.ConfigParser()
        if config_path is not None:
            path = Path(config_path)
            if not path.is_file():
                raise ConfigError("config", f"config file not found: {path}")
            try:
                self.file.read(path)
            except configparser.Error as e:
                raise ConfigError("config", f"cannot parse {path}: {e}".replace("\n", " ")) from None
        self._profile = None
        self._profile = self.get("run", "profile")
        if self._profile not in PROFILES:
            raise ConfigError("run.profile", f"unknown profile {self._profile!r}; choose from {PROFILES}")

    @property
    def profile(self):
        return self._profile

    def source(self, section, key):
        if (section, key) in self.flags:
            return "flag"
        if env_name(section, key) in self.env:
            return "env"
        if self.file.has_option(section, key):
            return "config"
        return "default"

    def get(self, section, key):
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"{section}.{key}", "unknown setting")
        conv, smoke, full = SCHEMA[section][key]
        src = self.source(section, key)
        if src == "flag":
            raw = self.flags[(section, key)]
        elif src == "env":
            raw = self.env[env_name(section, key)]
        elif src == "config":
            raw = self.file.get(section, key)
        else:
            return full if self._profile == "full" else smoke
        try:
            return conv(raw)
        except (TypeError, ValueError) as e:
            where = {"flag": "command line", "env": env_name(section, key), "config": str(self.config_path)}[src]
            raise ConfigError(f"{section}.{key}", f"invalid value {raw!r} from {where}: {e}") from None

    def section(self, name):
        return {key: self.get(name, key) for key in SCHEMA[name]}

    def validate(self):
        for section in self.file.sections():
            if section not in SCHEMA:
                raise ConfigError(section, f"unknown config section in {self.config_path}")
            for key in self.file.options(section):
                if key not in SCHEMA[section]:
                    raise ConfigError(f"{section}.{key}", f"unknown key in {self.config_path}")
        return self.resolved()

    def resolved(self):
        out = {}
        for section in SCHEMA:
            values = self.section(section)
            out[section] = {k: list(v) if isinstance(v, tuple) else v for k, v in values.items()}
        return out
