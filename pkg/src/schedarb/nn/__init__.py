"""Minimal float64 neural-network engine: dense/conv layers, MAE and sparse
crossentropy losses, Adam, early-stopping training, and exact weight I/O."""

from .layers import ACTIVATIONS, Activation, Conv2D, Dense, Flatten, Layer, Reshape, layer_from_spec
from .network import (
    LOSSES,
    Network,
    backward,
    load_weights,
    loss_and_grad,
    mae_loss,
    save_weights,
    sparse_crossentropy_loss,
)
from .training import AdamState, TrainConfig, adam_step, evaluate, init_adam, train

__all__ = [
    "ACTIVATIONS",
    "Activation",
    "AdamState",
    "Conv2D",
    "Dense",
    "Flatten",
    "LOSSES",
    "Layer",
    "Network",
    "Reshape",
    "TrainConfig",
    "adam_step",
    "backward",
    "evaluate",
    "init_adam",
    "layer_from_spec",
    "load_weights",
    "loss_and_grad",
    "mae_loss",
    "save_weights",
    "sparse_crossentropy_loss",
    "train",
]
