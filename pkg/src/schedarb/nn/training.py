"""Adam optimizer, the mini-batch training loop with early stopping, and
metric evaluation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .network import LOSSES, Network, backward, loss_and_grad

_EVAL_CHUNK = 512


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "sparse_categorical_crossentropy"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 5
    monitor: str = "val_accuracy"
    seed: int = 0

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1/beta2 must be in [0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        if self.monitor not in ("val_accuracy", "val_loss"):
            raise ValueError(f"unknown monitor {self.monitor!r}")
        if self.monitor == "val_accuracy" and self.loss == "mae":
            raise ValueError("val_accuracy monitor requires a classification loss")


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0


def init_adam(params: Sequence[np.ndarray]) -> AdamState:
    return AdamState(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
    config: TrainConfig,
) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update; returns fresh arrays (inputs untouched)."""
    t = state.t + 1
    b1, b2 = config.beta1, config.beta2
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        new_params.append(p - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(m=new_m, v=new_v, t=t)


def evaluate(net: Network, dataset: tuple[np.ndarray, np.ndarray], loss: str) -> dict:
    """Mean loss over a dataset; adds accuracy for classification."""
    x, target = dataset
    if len(x) == 0:
        raise ValueError("dataset must be nonempty")
    total = 0.0
    correct = 0
    for start in range(0, len(x), _EVAL_CHUNK):
        xb = x[start : start + _EVAL_CHUNK]
        tb = target[start : start + _EVAL_CHUNK]
        out = net.forward(xb)
        value, _ = loss_and_grad(loss, out, tb)
        total += value * len(xb)
        if loss == "sparse_categorical_crossentropy":
            correct += int((out.argmax(axis=1) == np.asarray(tb)).sum())
    metrics = {"loss": total / len(x)}
    if loss == "sparse_categorical_crossentropy":
        metrics["accuracy"] = correct / len(x)
    return metrics


def train(
    net: Network,
    train_set: tuple[np.ndarray, np.ndarray],
    val_set: tuple[np.ndarray, np.ndarray],
    config: TrainConfig,
) -> tuple[Network, dict]:
    """Mini-batch Adam training with early stopping on the validation monitor.

    Stops once the monitor fails to improve for `patience` consecutive epochs
    (or at max_epochs) and restores the best-epoch weights. A non-finite
    training loss aborts immediately, keeping the best weights seen so far and
    flagging the history. Bit-identical per seed.
    """
    x, target = train_set
    if len(x) == 0 or len(val_set[0]) == 0:
        raise ValueError("train and validation sets must be nonempty")
    rng = np.random.default_rng(config.seed)
    state = init_adam(net.params)
    higher_better = config.monitor == "val_accuracy"
    best_value = -np.inf if higher_better else np.inf
    best_params = net.copy_params()
    best_epoch = 0
    bad_epochs = 0
    history: dict = {
        "train_loss": [],
        "val_loss": [],
        "monitor": config.monitor,
        "diverged": False,
    }
    if higher_better:
        history["val_accuracy"] = []

    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(x))
        batch_losses = []
        for start in range(0, len(x), config.batch_size):
            idx = order[start : start + config.batch_size]
            value, grads = backward(net, x[idx], target[idx], config.loss)
            if not np.isfinite(value):
                warnings.warn(
                    f"training diverged (non-finite loss) at epoch {epoch}; "
                    f"keeping best weights from epoch {best_epoch}"
                )
                history["diverged"] = True
                history["diverged_epoch"] = epoch
                net.set_params(best_params)
                history["best_epoch"] = best_epoch
                history["stopped_epoch"] = epoch
                return net, history
            params, state = adam_step(net.params, grads, state, config)
            net.set_params(params)
            batch_losses.append(value)
        history["train_loss"].append(float(np.mean(batch_losses)))

        metrics = evaluate(net, val_set, config.loss)
        history["val_loss"].append(metrics["loss"])
        if higher_better:
            history["val_accuracy"].append(metrics["accuracy"])
        value = metrics["accuracy"] if higher_better else metrics["loss"]
        improved = value > best_value if higher_better else value < best_value
        if improved:
            best_value = value
            best_params = net.copy_params()
            best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                break

    net.set_params(best_params)
    history["best_epoch"] = best_epoch
    history["stopped_epoch"] = epoch
    return net, history


__all__ = [
    "AdamState",
    "TrainConfig",
    "adam_step",
    "evaluate",
    "init_adam",
    "train",
]
