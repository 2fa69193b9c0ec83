"""Trainable reconstruction: networks, explicit gradients, Adam, training."""

from .optim import AdamConfig, AdamState, adam_step
from .params import (NetSpec, ParamStore, load_params, net_specs_for_scale,
                     save_params)
from .pipeline import (LAMBDA_NAME, LossValues, LossWeights, ReconPipeline,
                       build_pipeline, loss_total, pipeline_loss_and_grad)
from .training import EpochLog, TrainConfig, train, write_loss_log

__all__ = [
    "AdamConfig", "AdamState", "adam_step", "NetSpec", "ParamStore",
    "load_params", "net_specs_for_scale", "save_params", "LAMBDA_NAME",
    "LossValues", "LossWeights", "ReconPipeline", "build_pipeline",
    "loss_total", "pipeline_loss_and_grad", "EpochLog", "TrainConfig",
    "train", "write_loss_log",
]
