"""Layer kinds for the minimal network engine: dense, 2-D convolution, the
Flatten/Reshape pseudolayers, and activations.

Layers are stateless apart from their parameters: forward(x) has no side
effects and backward(x, grad) receives the layer input explicitly, so frozen
networks can be shared across threads.

Shapes exclude the batch dimension; arrays passed to forward/backward carry it
in axis 0. All arithmetic is float64 for reproducible gradient checks.
"""

from __future__ import annotations

import numpy as np

ACTIVATIONS = ("relu", "softmax", "linear")


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    kind = "layer"

    def build(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        """Validate the input shape and return the output shape."""
        raise NotImplementedError

    def init(self, rng: np.random.Generator) -> None:
        """Allocate parameters (after build). No-op for parameter-free layers."""

    @property
    def params(self) -> list[np.ndarray]:
        return []

    def set_params(self, params: list[np.ndarray]) -> None:
        if params:
            raise ValueError(f"{self.kind} layer takes no parameters")

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, x: np.ndarray, grad: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Gradient w.r.t. the input plus gradients w.r.t. each parameter."""
        raise NotImplementedError

    def spec(self) -> dict:
        return {"kind": self.kind}


class Dense(Layer):
    kind = "dense"

    def __init__(self, units: int):
        if units < 1:
            raise ValueError("units must be >= 1")
        self.units = units
        self.in_features = None
        self.weight = None
        self.bias = None

    def build(self, in_shape):
        if len(in_shape) != 1:
            raise ValueError(f"dense expects flat input, got shape {in_shape}")
        self.in_features = in_shape[0]
        return (self.units,)

    def init(self, rng):
        self.weight = glorot_uniform(rng, self.in_features, self.units, (self.in_features, self.units))
        self.bias = np.zeros(self.units)

    @property
    def params(self):
        return [self.weight, self.bias]

    def set_params(self, params):
        weight, bias = params
        if weight.shape != (self.in_features, self.units) or bias.shape != (self.units,):
            raise ValueError(
                f"dense layer expects shapes {(self.in_features, self.units)} and "
                f"{(self.units,)}, got {weight.shape} and {bias.shape}"
            )
        self.weight = np.asarray(weight, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)

    def forward(self, x):
        return x @ self.weight + self.bias

    def backward(self, x, grad):
        d_weight = x.T @ grad
        d_bias = grad.sum(axis=0)
        return grad @ self.weight.T, [d_weight, d_bias]

    def spec(self):
        return {"kind": self.kind, "units": self.units}


class Conv2D(Layer):
    """Same-padded, stride-1 convolution with one bias per filter.

    Accepts (H, W) single-channel or (H, W, C) input; output is (H, W, filters).
    """

    kind = "conv2d"

    def __init__(self, filters: int, kernel_h: int, kernel_w: int):
        if filters < 1 or kernel_h < 1 or kernel_w < 1:
            raise ValueError("filters and kernel dims must be >= 1")
        self.filters = filters
        self.kernel_h = kernel_h
        self.kernel_w = kernel_w
        self.in_shape = None
        self.channels = None
        self.kernel = None
        self.bias = None

    def build(self, in_shape):
        if len(in_shape) == 2:
            h, w = in_shape
            c = 1
        elif len(in_shape) == 3:
            h, w, c = in_shape
        else:
            raise ValueError(f"conv2d expects (H, W) or (H, W, C) input, got {in_shape}")
        if self.kernel_h > h or self.kernel_w > w:
            raise ValueError(
                f"kernel {self.kernel_h}x{self.kernel_w} exceeds input {h}x{w}"
            )
        self.in_shape = in_shape
        self.channels = c
        return (h, w, self.filters)

    def init(self, rng):
        k = (self.kernel_h, self.kernel_w, self.channels, self.filters)
        fan_in = self.kernel_h * self.kernel_w * self.channels
        fan_out = self.kernel_h * self.kernel_w * self.filters
        self.kernel = glorot_uniform(rng, fan_in, fan_out, k)
        self.bias = np.zeros(self.filters)

    @property
    def params(self):
        return [self.kernel, self.bias]

    def set_params(self, params):
        kernel, bias = params
        expect = (self.kernel_h, self.kernel_w, self.channels, self.filters)
        if kernel.shape != expect or bias.shape != (self.filters,):
            raise ValueError(f"conv2d expects kernel {expect}, got {kernel.shape}")
        self.kernel = np.asarray(kernel, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)

    def _pad(self, x3):
        pt = (self.kernel_h - 1) // 2
        pb = self.kernel_h - 1 - pt
        pl = (self.kernel_w - 1) // 2
        pr = self.kernel_w - 1 - pl
        return np.pad(x3, ((0, 0), (pt, pb), (pl, pr), (0, 0)))

    def forward(self, x):
        batch = x.shape[0]
        h, w = self.in_shape[0], self.in_shape[1]
        x3 = x.reshape(batch, h, w, self.channels)
        xp = self._pad(x3)
        out = np.zeros((batch, h, w, self.filters))
        for a in range(self.kernel_h):
            for b in range(self.kernel_w):
                out += xp[:, a : a + h, b : b + w, :] @ self.kernel[a, b]
        return out + self.bias

    def backward(self, x, grad):
        batch = x.shape[0]
        h, w = self.in_shape[0], self.in_shape[1]
        x3 = x.reshape(batch, h, w, self.channels)
        xp = self._pad(x3)
        d_kernel = np.zeros_like(self.kernel)
        d_xp = np.zeros_like(xp)
        for a in range(self.kernel_h):
            for b in range(self.kernel_w):
                window = xp[:, a : a + h, b : b + w, :]
                d_kernel[a, b] = np.tensordot(window, grad, axes=([0, 1, 2], [0, 1, 2]))
                d_xp[:, a : a + h, b : b + w, :] += grad @ self.kernel[a, b].T
        d_bias = grad.sum(axis=(0, 1, 2))
        pt = (self.kernel_h - 1) // 2
        pl = (self.kernel_w - 1) // 2
        d_x3 = d_xp[:, pt : pt + h, pl : pl + w, :]
        return d_x3.reshape((batch,) + tuple(self.in_shape)), [d_kernel, d_bias]

    def spec(self):
        return {
            "kind": self.kind,
            "filters": self.filters,
            "kernel_h": self.kernel_h,
            "kernel_w": self.kernel_w,
        }


class Flatten(Layer):
    kind = "flatten"

    def __init__(self):
        self.in_shape = None

    def build(self, in_shape):
        self.in_shape = in_shape
        return (int(np.prod(in_shape)),)

    def forward(self, x):
        return x.reshape(x.shape[0], -1)

    def backward(self, x, grad):
        return grad.reshape((x.shape[0],) + tuple(self.in_shape)), []


class Reshape(Layer):
    kind = "reshape"

    def __init__(self, shape):
        self.shape = tuple(int(d) for d in shape)
        self.in_shape = None

    def build(self, in_shape):
        if int(np.prod(in_shape)) != int(np.prod(self.shape)):
            raise ValueError(f"reshape {in_shape} -> {self.shape} changes element count")
        self.in_shape = in_shape
        return self.shape

    def forward(self, x):
        return x.reshape((x.shape[0],) + self.shape)

    def backward(self, x, grad):
        return grad.reshape((x.shape[0],) + tuple(self.in_shape)), []

    def spec(self):
        return {"kind": self.kind, "shape": list(self.shape)}


class Activation(Layer):
    kind = "activation"

    def __init__(self, fn: str):
        if fn not in ACTIVATIONS:
            raise ValueError(f"unknown activation {fn!r}")
        self.fn = fn
        self.in_shape = None

    def build(self, in_shape):
        self.in_shape = in_shape
        return in_shape

    def forward(self, x):
        if self.fn == "relu":
            return np.maximum(x, 0.0)
        if self.fn == "softmax":
            shifted = x - x.max(axis=-1, keepdims=True)
            e = np.exp(shifted)
            return e / e.sum(axis=-1, keepdims=True)
        return x

    def backward(self, x, grad):
        if self.fn == "relu":
            return grad * (x > 0.0), []
        if self.fn == "softmax":
            p = self.forward(x)
            inner = (grad * p).sum(axis=-1, keepdims=True)
            return p * (grad - inner), []
        return grad, []

    def spec(self):
        return {"kind": self.kind, "fn": self.fn}


_LAYER_KINDS = {cls.kind: cls for cls in (Dense, Conv2D, Flatten, Reshape, Activation)}


def layer_from_spec(spec: dict) -> Layer:
    kind = spec.get("kind")
    if kind == "dense":
        return Dense(int(spec["units"]))
    if kind == "conv2d":
        return Conv2D(int(spec["filters"]), int(spec["kernel_h"]), int(spec["kernel_w"]))
    if kind == "flatten":
        return Flatten()
    if kind == "reshape":
        return Reshape(spec["shape"])
    if kind == "activation":
        return Activation(spec["fn"])
    raise ValueError(f"unknown layer kind {kind!r}")
