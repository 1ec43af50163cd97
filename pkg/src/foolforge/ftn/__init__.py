"""Fooling transfer network: conditional encoder/decoder trained to match fooling-image features."""

from foolforge.ftn.bank import RepresentationBank, build_representation_bank, flatten_taps
from foolforge.ftn.checkpoint import load_ftn, save_ftn
from foolforge.ftn.losses import (
    combine,
    loss_content,
    loss_mmd,
    loss_total,
    loss_tv,
    mmd_matrix,
    mmd_trace,
    ssim,
    ssim_map,
)
from foolforge.ftn.model import SMOKE_FTN, FTNConfig, FTNModel, condition_params, ftn_forward, ftn_graph
from foolforge.ftn.train import FTNTrainingError, StepLosses, epochs_to_threshold, train_ftn, write_training_report

__all__ = [
    "SMOKE_FTN",
    "FTNConfig",
    "FTNModel",
    "FTNTrainingError",
    "RepresentationBank",
    "StepLosses",
    "build_representation_bank",
    "combine",
    "condition_params",
    "epochs_to_threshold",
    "flatten_taps",
    "ftn_forward",
    "ftn_graph",
    "load_ftn",
    "loss_content",
    "loss_mmd",
    "loss_total",
    "loss_tv",
    "mmd_matrix",
    "mmd_trace",
    "save_ftn",
    "ssim",
    "ssim_map",
    "train_ftn",
    "write_training_report",
]
