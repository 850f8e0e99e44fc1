"""Network container, the two losses, backpropagation, and weight-file I/O."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .layers import Activation, Layer, layer_from_spec

LOSSES = ("mae", "sparse_categorical_crossentropy")

WEIGHTS_FORMAT = "schedarb-weights"
WEIGHTS_VERSION = 1
_PROB_FLOOR = 1e-12


class Network:
    """Ordered layers with a declared input shape.

    Construction walks the layer chain, validating that consecutive shapes
    compose (errors name the offending layer index) and that softmax appears
    only as the final activation. Parameters are Glorot-uniform initialized
    from the seed, in declaration order.
    """

    def __init__(self, input_shape: Sequence[int], layers: Sequence[Layer], seed: int = 0):
        self.input_shape = tuple(int(d) for d in input_shape)
        self.layers = list(layers)
        shape = self.input_shape
        self.layer_shapes = [shape]
        for idx, layer in enumerate(self.layers):
            try:
                shape = layer.build(shape)
            except ValueError as exc:
                raise ValueError(f"layer {idx} ({layer.kind}): {exc}") from None
            self.layer_shapes.append(tuple(shape))
        for idx, layer in enumerate(self.layers):
            if isinstance(layer, Activation) and layer.fn == "softmax":
                if idx != len(self.layers) - 1:
                    raise ValueError(
                        f"layer {idx}: softmax is only allowed as the final activation"
                    )
        rng = np.random.default_rng(seed)
        for layer in self.layers:
            layer.init(rng)

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self.layer_shapes[-1]

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.input_shape:
            raise ValueError(
                f"layer 0 input mismatch: expected {self.input_shape}, got {x.shape[1:]}"
            )
        return x

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Batched forward pass; pure (no caches are stored on the network)."""
        out = self._check_input(x)
        for layer in self.layers:
            out = layer.forward(out)
        return out

    def forward_trace(self, x: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Per-layer inputs plus the final output, for backpropagation."""
        out = self._check_input(x)
        inputs = []
        for layer in self.layers:
            inputs.append(out)
            out = layer.forward(out)
        return inputs, out

    @property
    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    def set_params(self, params: Sequence[np.ndarray]) -> None:
        params = list(params)
        expected = len(self.params)
        if len(params) != expected:
            raise ValueError(f"expected {expected} parameter arrays, got {len(params)}")
        i = 0
        for layer in self.layers:
            k = len(layer.params)
            if k:
                layer.set_params(params[i : i + k])
                i += k

    def copy_params(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params]

    def specs(self) -> list[dict]:
        return [layer.spec() for layer in self.layers]


def mae_loss(output: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean absolute error over every entry; subgradient 0 at exact ties."""
    if output.shape != target.shape:
        raise ValueError(f"output shape {output.shape} != target shape {target.shape}")
    diff = output - target
    return float(np.abs(diff).mean()), np.sign(diff) / diff.size


def sparse_crossentropy_loss(probs: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Crossentropy against integer class labels, on softmax probabilities.

    The returned gradient is w.r.t. the probabilities; composed with the
    softmax layer's backward it reduces to (p - onehot) / batch at the logits.
    """
    if probs.ndim != 2:
        raise ValueError(f"expected (batch, classes) probabilities, got {probs.shape}")
    labels = np.asarray(labels)
    if labels.shape != (probs.shape[0],):
        raise ValueError(f"expected {probs.shape[0]} labels, got shape {labels.shape}")
    if labels.min() < 0 or labels.max() >= probs.shape[1]:
        raise ValueError("labels out of range")
    batch = probs.shape[0]
    picked = np.clip(probs[np.arange(batch), labels], _PROB_FLOOR, None)
    loss = float(-np.log(picked).mean())
    grad = np.zeros_like(probs)
    grad[np.arange(batch), labels] = -1.0 / (batch * picked)
    return loss, grad


def loss_and_grad(loss: str, output: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    if loss == "mae":
        return mae_loss(output, target)
    if loss == "sparse_categorical_crossentropy":
        return sparse_crossentropy_loss(output, target)
    raise ValueError(f"unknown loss {loss!r}")


def backward(
    net: Network, x: np.ndarray, target: np.ndarray, loss: str
) -> tuple[float, list[np.ndarray]]:
    """Mean-loss value and gradients for every parameter, in net.params order."""
    inputs, output = net.forward_trace(x)
    value, grad = loss_and_grad(loss, output, target)
    grads_per_layer = []
    for layer, layer_in in zip(reversed(net.layers), reversed(inputs)):
        grad, param_grads = layer.backward(layer_in, grad)
        grads_per_layer.append(param_grads)
    grads: list[np.ndarray] = []
    for param_grads in reversed(grads_per_layer):
        grads.extend(param_grads)
    return value, grads


def save_weights(net: Network, path) -> None:
    """Single-file weight format, exact round trip.

    Layout: one JSON header line (format name, version, input shape, layer
    specs, parameter shapes), a newline, then each parameter array as raw
    little-endian float64 bytes in C order, concatenated in declaration order.
    """
    header = {
        "format": WEIGHTS_FORMAT,
        "version": WEIGHTS_VERSION,
        "input_shape": list(net.input_shape),
        "layers": net.specs(),
        "param_shapes": [list(p.shape) for p in net.params],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for p in net.params:
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_weights(path) -> Network:
    """Rebuild a network from a weight file; rejects malformed or truncated data."""
    blob = Path(path).read_bytes()
    nl = blob.find(b"\n")
    if nl < 0:
        raise ValueError("weight file has no header line")
    header = json.loads(blob[:nl].decode("utf-8"))
    if header.get("format") != WEIGHTS_FORMAT or header.get("version") != WEIGHTS_VERSION:
        raise ValueError("not a recognized weight file")
    net = Network(header["input_shape"], [layer_from_spec(s) for s in header["layers"]], seed=0)
    shapes = [tuple(s) for s in header["param_shapes"]]
    own_shapes = [p.shape for p in net.params]
    if shapes != own_shapes:
        raise ValueError(f"parameter shapes {shapes} do not match layer specs {own_shapes}")
    raw = blob[nl + 1 :]
    expected = sum(int(np.prod(s)) for s in shapes) * 8
    if len(raw) != expected:
        raise ValueError(f"weight payload is {len(raw)} bytes, expected {expected}")
    params = []
    offset = 0
    for shape in shapes:
        count = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape)
        params.append(arr.astype(np.float64))
        offset += count * 8
    net.set_params(params)
    return net
