"""FTN checkpoints: parameters and bank in one bundle with a structured header."""

from __future__ import annotations

from foolforge.autodiff.serialize import load_bundle, save_bundle
from foolforge.ftn.bank import RepresentationBank
from foolforge.ftn.model import FTNConfig, FTNModel

KIND = "ftn"


def save_ftn(model, path):
    bank = model.bank
    header = {
        "config": model.config.to_dict(),
        "fingerprint": model.fingerprint,
        "gamma": model.config.gamma,
        "lam": model.config.lam,
        "seed": model.config.seed,
        "bank": {
            "taps": list(bank.taps),
            "tap_shapes": {t: list(s) for t, s in bank.tap_shapes.items()},
            "target": bank.target,
            "source_ids": list(bank.source_ids),
            "fingerprint": bank.fingerprint(),
        },
    }
    tensors = {f"param/{k}": v for k, v in sorted(model.params.items())}
    tensors["bank/features"] = bank.features
    save_bundle(path, KIND, header, tensors)


def load_ftn(path):
    header, tensors = load_bundle(path, kind=KIND)
    b = header["bank"]
    bank = RepresentationBank(
        tensors["bank/features"],
        tuple(b["taps"]),
        {t: tuple(s) for t, s in b["tap_shapes"].items()},
        int(b["target"]),
        list(b["source_ids"]),
    )
    params = {k[len("param/") :]: v for k, v in tensors.items() if k.startswith("param/")}
    return FTNModel(FTNConfig.from_dict(header["config"]), params, bank, header["fingerprint"])
