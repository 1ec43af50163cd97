"""Classifier checkpoints: a tensor bundle plus a JSON header."""

from __future__ import annotations

from foolforge.autodiff.serialize import load_bundle, save_bundle
from foolforge.autodiff.tensor import ShapeError
from foolforge.victims.zoo import ArchitectureSpec, Classifier

KIND = "classifier"


def save_checkpoint(clf, path):
    header = {
        "spec": clf.spec.to_dict(),
        "labels": list(clf.labels),
        "fingerprint": clf.fingerprint,
        "metrics": clf.metrics,
    }
    save_bundle(path, KIND, header, dict(sorted(clf.params.items())))


def load_checkpoint(path, spec=None):
    """Load a classifier; if ``spec`` is given the stored weights must fit it."""
    header, tensors = load_bundle(path, kind=KIND)
    stored = ArchitectureSpec.from_dict(header["spec"])
    target = spec or stored
    expected = target.param_shapes()
    for name, shape in expected.items():
        if name not in tensors:
            raise ShapeError(f"checkpoint {path} has no weights for layer {name} of {target.name}")
        if tuple(tensors[name].shape) != tuple(shape):
            raise ShapeError(
                f"checkpoint {path}: layer {name} stored as {tuple(tensors[name].shape)}, "
                f"{target.name} expects {tuple(shape)}"
            )
    return Classifier(target, tensors, tuple(header["labels"]), header["fingerprint"], header["metrics"])
