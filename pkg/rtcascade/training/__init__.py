from rtcascade.training.augment import augment
from rtcascade.training.checkpoint import (
    Checkpoint,
    load_checkpoint,
    restore,
    save_checkpoint,
)
from rtcascade.training.config import ConfigAugmentation, ConfigTrain
from rtcascade.training.optim import AdamWSettings, OptimState, adamw_step
from rtcascade.training.trainer import TrainResult, batch_loss, build_parameters, train

__all__ = [
    "AdamWSettings",
    "Checkpoint",
    "ConfigAugmentation",
    "ConfigTrain",
    "OptimState",
    "TrainResult",
    "adamw_step",
    "augment",
    "batch_loss",
    "build_parameters",
    "load_checkpoint",
    "restore",
    "save_checkpoint",
    "train",
]
