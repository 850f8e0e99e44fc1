"""The scheduler-selection arbiter: builds, trains, and serves the six
{none, simple, cnn} x {deep, cnn} frontend/backend configurations.

The frontend is a denoising autoencoder over the prediction matrix; the
backend is a 6-way softmax classifier over scheduler kinds. Frontends and
backends compose freely because every backend starts with its own
Flatten/Reshape glue, so any frontend output shape is accepted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .model import (
    AIPC_MAX,
    CANONICAL_KINDS,
    NUM_CLASSES,
    PerfMatrix,
    SchedulerKind,
    class_to_kind,
)
from .nn import (
    Activation,
    Conv2D,
    Dense,
    Flatten,
    Network,
    Reshape,
    TrainConfig,
    load_weights,
    save_weights,
    train,
)

FRONTENDS = ("none", "simple", "cnn")
BACKENDS = ("deep", "cnn")

BUNDLE_FILE = "arbiter.json"
WEIGHTS_FILE = "weights.bin"


@dataclass(frozen=True)
class ArbiterConfig:
    """One of the six arbiter flavors, sized for n-core systems."""

    frontend: str
    backend: str
    n: int
    num_classes: int = NUM_CLASSES

    def __post_init__(self):
        if self.frontend not in FRONTENDS:
            raise ValueError(f"frontend must be one of {FRONTENDS}, got {self.frontend!r}")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.n < 2:
            raise ValueError("need n >= 2")
        if self.num_classes != len(CANONICAL_KINDS):
            raise ValueError(f"num_classes must equal the catalog size {len(CANONICAL_KINDS)}")
        if "cnn" in (self.frontend, self.backend) and self.n < 4:
            raise ValueError("cnn modules need n >= 4 (4x4 kernels)")

    @property
    def name(self) -> str:
        return f"{self.frontend}_{self.backend}"


def all_configs(n: int) -> tuple[ArbiterConfig, ...]:
    return tuple(
        ArbiterConfig(front, back, n) for front in FRONTENDS for back in BACKENDS
    )


def _frontend_layers(config: ArbiterConfig) -> list:
    n = config.n
    if config.frontend == "none":
        return []
    if config.frontend == "simple":
        # n*n inputs squeeze to n*n/2 hidden units and fan back out.
        hidden = max(2, (n * n) // 2)
        return [
            Flatten(),
            Dense(hidden),
            Activation("relu"),
            Dense(n * n),
            Activation("linear"),
        ]
    return [
        Reshape((n, n)),
        Conv2D(8, 4, 4),
        Activation("relu"),
        Conv2D(4, 4, 4),
        Activation("relu"),
        Conv2D(1, 4, 4),
        Activation("linear"),
    ]


def _backend_layers(config: ArbiterConfig) -> list:
    n = config.n
    if config.backend == "deep":
        return [
            Flatten(),
            Dense(n * n),
            Activation("relu"),
            Dense(max(2, (n * n) // 2)),
            Activation("relu"),
            Dense(config.num_classes),
            Activation("softmax"),
        ]
    return [
        Reshape((n, n)),
        Conv2D(8, 4, 4),
        Activation("relu"),
        Conv2D(16, 4, 4),
        Activation("relu"),
        Flatten(),
        Dense(32),
        Activation("relu"),
        Dense(config.num_classes),
        Activation("softmax"),
    ]


def build(config: ArbiterConfig, seed: int = 0) -> Network:
    """Full classifier network (optional frontend + backend) for n x n input."""
    layers = _frontend_layers(config) + _backend_layers(config)
    return Network((config.n, config.n), layers, seed=seed)


def build_frontend(config: ArbiterConfig, seed: int = 0) -> Network:
    """Standalone denoiser: frontend layers mapping n x n back to n x n."""
    if config.frontend == "none":
        raise ValueError("config has no frontend to build")
    n = config.n
    layers = _frontend_layers(config) + [Reshape((n, n))]
    return Network((n, n), layers, seed=seed)


def stack_matrices(matrices: Sequence[PerfMatrix]) -> np.ndarray:
    return np.stack([m.values for m in matrices])


def _shape_targets(targets: np.ndarray, out_shape: tuple[int, ...]) -> np.ndarray:
    return targets.reshape((targets.shape[0],) + out_shape)


def train_denoiser(
    net: Network,
    train_pairs: tuple[np.ndarray, np.ndarray],
    val_pairs: tuple[np.ndarray, np.ndarray],
    config: TrainConfig | None = None,
) -> tuple[Network, dict]:
    """Standalone frontend training: minimize MAE against oracular matrices.

    Takes (noisy, oracular) array pairs only; labels are never an input here.
    """
    if net.output_shape != net.input_shape:
        raise ValueError("denoiser networks must map the matrix shape onto itself")
    config = config or TrainConfig(loss="mae", monitor="val_loss")
    config = replace(config, loss="mae", monitor="val_loss")
    x, t = train_pairs
    vx, vt = val_pairs
    return train(
        net,
        (x, _shape_targets(t, net.output_shape)),
        (vx, _shape_targets(vt, net.output_shape)),
        config,
    )


def train_classifier(
    net: Network,
    train_set: tuple[np.ndarray, np.ndarray],
    val_set: tuple[np.ndarray, np.ndarray],
    config: TrainConfig | None = None,
) -> tuple[Network, dict]:
    """Supervised 6-way training; inputs may be oracular or noisy matrices."""
    config = config or TrainConfig()
    config = replace(config, loss="sparse_categorical_crossentropy")
    for labels in (train_set[1], val_set[1]):
        labels = np.asarray(labels)
        if labels.min() < 0 or labels.max() >= NUM_CLASSES:
            raise ValueError(f"labels must lie in [0, {NUM_CLASSES})")
    return train(net, train_set, val_set, config)


def train_linked(
    config: ArbiterConfig,
    train_set: tuple[np.ndarray, np.ndarray],
    val_set: tuple[np.ndarray, np.ndarray],
    train_config: TrainConfig | None = None,
    seed: int = 0,
) -> tuple[Network, dict]:
    """End-to-end frontend+backend training with crossentropy only.

    The frontend is free to become generative rather than denoising: it learns
    whatever matrix transformation helps the classifier. Takes (noisy, label)
    pairs; oracular matrices are never an input here. Divergence aborts the
    run, keeping the best weights (see nn.train).
    """
    if config.frontend == "none":
        raise ValueError("linked training needs a frontend")
    net = build(config, seed=seed)
    return train_classifier(net, train_set, val_set, train_config)


def select(
    net: Network,
    matrix: PerfMatrix,
    kinds: Sequence[SchedulerKind] = CANONICAL_KINDS,
) -> tuple[SchedulerKind, np.ndarray]:
    """Pick the scheduler with the highest softmax probability.

    Exact probability ties break toward the cheaper scheduler. Returns the
    kind plus the full probability vector.
    """
    if (matrix.n, matrix.n) != net.input_shape:
        raise ValueError(f"matrix is {matrix.n}x{matrix.n}, network expects {net.input_shape}")
    probs = net.forward(matrix.values[None])[0]
    best = probs.max()
    tied = [i for i in range(len(probs)) if probs[i] == best]
    label = min(tied, key=lambda i: kinds[i].overhead_rank)
    return class_to_kind(label, kinds), probs


def denoise(net: Network, matrix: PerfMatrix) -> PerfMatrix:
    """Run a standalone-trained frontend; output clamped to [0, AIPC_MAX]."""
    if (matrix.n, matrix.n) != net.input_shape:
        raise ValueError(f"matrix is {matrix.n}x{matrix.n}, network expects {net.input_shape}")
    out = net.forward(matrix.values[None])[0]
    out = out.reshape(matrix.n, matrix.n)
    return PerfMatrix(np.clip(out, 0.0, AIPC_MAX))


def save_bundle(out_dir, net: Network, config: ArbiterConfig, metadata: Mapping) -> None:
    """Persist config + weights + training metadata (seed, history, dataset hash)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    record = {
        "frontend": config.frontend,
        "backend": config.backend,
        "n": config.n,
        "num_classes": config.num_classes,
        "metadata": dict(metadata),
    }
    with open(out / BUNDLE_FILE, "w") as fh:
        json.dump(record, fh, sort_keys=True, indent=2)
        fh.write("\n")
    save_weights(net, out / WEIGHTS_FILE)


def load_bundle(in_dir) -> tuple[Network, ArbiterConfig, dict]:
    src = Path(in_dir)
    with open(src / BUNDLE_FILE) as fh:
        record = json.load(fh)
    config = ArbiterConfig(
        frontend=record["frontend"],
        backend=record["backend"],
        n=int(record["n"]),
        num_classes=int(record["num_classes"]),
    )
    net = load_weights(src / WEIGHTS_FILE)
    return net, config, record.get("metadata", {})
