"""Victim classifiers: datasets, the architecture zoo, training and checkpoints."""

from foolforge.victims.checkpoint import load_checkpoint, save_checkpoint
from foolforge.victims.data import (
    CLASS_NAMES,
    STAR_CLASS,
    DatasetSplit,
    load_cifar10,
    load_dataset,
    make_synthetic_dataset,
    read_cifar10_batch,
    save_dataset,
    synthetic_shapes,
)
from foolforge.victims.train import TrainConfig, TrainingDivergedError, train_classifier
from foolforge.victims.zoo import (
    ORACLE_ARCHITECTURE,
    STOCK_ARCHITECTURES,
    TRAINING_VICTIM,
    VALIDATION_VICTIMS,
    ArchitectureSpec,
    Classifier,
    Layer,
    accuracy,
    activations,
    get_architecture,
    predict,
    representation_taps,
)

__all__ = [
    "CLASS_NAMES",
    "ORACLE_ARCHITECTURE",
    "STAR_CLASS",
    "STOCK_ARCHITECTURES",
    "TRAINING_VICTIM",
    "VALIDATION_VICTIMS",
    "ArchitectureSpec",
    "Classifier",
    "DatasetSplit",
    "Layer",
    "TrainConfig",
    "TrainingDivergedError",
    "accuracy",
    "activations",
    "get_architecture",
    "load_checkpoint",
    "load_cifar10",
    "load_dataset",
    "make_synthetic_dataset",
    "predict",
    "read_cifar10_batch",
    "representation_taps",
    "save_checkpoint",
    "save_dataset",
    "synthetic_shapes",
    "train_classifier",
]
