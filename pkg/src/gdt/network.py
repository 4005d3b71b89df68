"""Fully connected tanh network with explicit forward and backward passes.

Every layer computes x_out = tanh(W x_in + b). All arithmetic is float64,
parameters are plain numpy arrays, and gradients are derived by hand (no
autodiff). Values are immutable during forward/backward; `apply_update`
returns a fresh network.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError

NET_FORMAT_VERSION = 1


@dataclass
class Layer:
    """One dense layer; `w` has shape (out_dim, in_dim), `b` shape (out_dim,)."""

    w: np.ndarray
    b: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.w.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w.shape[0]


@dataclass
class FeedForwardNet:
    """A stack of tanh layers; `depth` is the layer count K."""

    layers: list[Layer]

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("network needs at least one layer")
        for k, layer in enumerate(self.layers):
            if layer.w.ndim != 2 or layer.b.ndim != 1:
                raise ShapeError(f"layer {k}: weight must be 2-D and bias 1-D")
            if layer.b.shape[0] != layer.out_dim:
                raise ShapeError(
                    f"layer {k}: bias length {layer.b.shape[0]} != rows {layer.out_dim}"
                )
            if k > 0 and layer.in_dim != self.layers[k - 1].out_dim:
                raise ShapeError(
                    f"layer {k}: input dim {layer.in_dim} != previous output dim "
                    f"{self.layers[k - 1].out_dim}"
                )

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def dims(self) -> list[int]:
        return [self.input_dim] + [layer.out_dim for layer in self.layers]

    def copy(self) -> "FeedForwardNet":
        return FeedForwardNet([Layer(l.w.copy(), l.b.copy()) for l in self.layers])


@dataclass
class ForwardTrace:
    """Stages of one forward pass: x^(0) is the input, x^(K) the output.

    Works for a single vector (d,) or a batch (n, d); all stages share the
    leading batch shape.
    """

    stages: list[np.ndarray] = field(default_factory=list)

    @property
    def input(self) -> np.ndarray:
        return self.stages[0]

    @property
    def output(self) -> np.ndarray:
        return self.stages[-1]


@dataclass
class Gradients:
    """Per-layer parameter gradients plus the gradient w.r.t. the input."""

    weight: list[np.ndarray]
    bias: list[np.ndarray]
    input: np.ndarray


def init_network(layer_dims, seed: int, scale: float = 0.1) -> FeedForwardNet:
    """Build a network with weights i.i.d. uniform in [-scale, scale], biases zero.

    Identical (layer_dims, seed, scale) always yields bit-identical parameters.
    """
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2:
        raise ConfigError("layer_dims needs at least an input and an output size")
    if any(d <= 0 for d in dims):
        raise ConfigError(f"layer_dims must be positive, got {dims}")
    if not np.isfinite(scale) or scale < 0:
        raise ConfigError(f"scale must be a finite non-negative float, got {scale}")
    rng = np.random.default_rng(seed)
    layers = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        w = rng.uniform(-scale, scale, size=(d_out, d_in))
        layers.append(Layer(w, np.zeros(d_out)))
    return FeedForwardNet(layers)


def forward(net: FeedForwardNet, x) -> ForwardTrace:
    """Run x through every layer, recording each stage.

    `x` may be one vector (d,) or a batch (n, d). Outputs lie strictly in
    (-1, 1) component-wise.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2):
        raise ShapeError(f"input must be 1-D or 2-D, got shape {x.shape}")
    if x.shape[-1] != net.input_dim:
        raise ShapeError(
            f"input dim {x.shape[-1]} does not match network input dim {net.input_dim}"
        )
    stages = [x]
    for layer in net.layers:
        x = np.tanh(x @ layer.w.T + layer.b)
        stages.append(x)
    return ForwardTrace(stages)


def backward(net: FeedForwardNet, trace: ForwardTrace, upstream) -> Gradients:
    """Backpropagate `upstream` = dJ/dy through the trace.

    Returns per-layer dJ/dW, dJ/db (summed over the batch when the trace is
    batched) and dJ/dx^(0).
    """
    if len(trace.stages) != net.depth + 1:
        raise ShapeError(
            f"trace has {len(trace.stages)} stages, expected {net.depth + 1}"
        )
    for k, layer in enumerate(net.layers):
        if trace.stages[k].shape[-1] != layer.in_dim:
            raise ShapeError(f"trace stage {k} does not match layer {k} input dim")
    g = np.asarray(upstream, dtype=np.float64)
    out = trace.output
    if g.shape != out.shape:
        raise ShapeError(
            f"upstream shape {g.shape} does not match output shape {out.shape}"
        )
    batched = g.ndim == 2
    grad_w: list[np.ndarray] = [None] * net.depth
    grad_b: list[np.ndarray] = [None] * net.depth
    for k in range(net.depth - 1, -1, -1):
        post = trace.stages[k + 1]
        prev = trace.stages[k]
        dz = g * (1.0 - post * post)  # tanh'(z) = 1 - tanh(z)^2
        if batched:
            grad_w[k] = dz.T @ prev
            grad_b[k] = dz.sum(axis=0)
        else:
            grad_w[k] = np.outer(dz, prev)
            grad_b[k] = dz
        g = dz @ net.layers[k].w
    return Gradients(grad_w, grad_b, g)


def apply_update(net: FeedForwardNet, grads: Gradients, step_size: float) -> FeedForwardNet:
    """Return a new network with every parameter p replaced by p - step_size * grad(p)."""
    if len(grads.weight) != net.depth or len(grads.bias) != net.depth:
        raise ShapeError("gradient layer count does not match network depth")
    layers = []
    for layer, gw, gb in zip(net.layers, grads.weight, grads.bias):
        if gw.shape != layer.w.shape or gb.shape != layer.b.shape:
            raise ShapeError("gradient shapes do not match network parameters")
        layers.append(Layer(layer.w - step_size * gw, layer.b - step_size * gb))
    return FeedForwardNet(layers)


def apply_transform(transform, x) -> np.ndarray:
    """Map features through `transform`: a FeedForwardNet, a callable, or None (identity)."""
    x = np.asarray(x, dtype=np.float64)
    if transform is None:
        return x
    if isinstance(transform, FeedForwardNet):
        return forward(transform, x).output
    return np.asarray(transform(x), dtype=np.float64)


def net_to_json_dict(net: FeedForwardNet) -> dict:
    return {
        "version": NET_FORMAT_VERSION,
        "dims": net.dims,
        "layers": [
            {"w": [float(v) for v in layer.w.ravel()], "b": [float(v) for v in layer.b]}
            for layer in net.layers
        ],
    }


def net_from_json_dict(doc: dict) -> FeedForwardNet:
    version = doc.get("version")
    if version != NET_FORMAT_VERSION:
        raise ConfigError(f"unsupported network format version: {version!r}")
    dims = [int(d) for d in doc["dims"]]
    if len(dims) != len(doc["layers"]) + 1:
        raise ShapeError("dims do not match the number of serialized layers")
    layers = []
    for k, entry in enumerate(doc["layers"]):
        d_in, d_out = dims[k], dims[k + 1]
        w = np.asarray(entry["w"], dtype=np.float64)
        if w.size != d_in * d_out:
            raise ShapeError(f"layer {k}: expected {d_in * d_out} weights, got {w.size}")
        b = np.asarray(entry["b"], dtype=np.float64)
        layers.append(Layer(w.reshape(d_out, d_in), b))
    return FeedForwardNet(layers)


def save_network(net: FeedForwardNet, path) -> None:
    """Write the network as versioned JSON; floats round-trip exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(net_to_json_dict(net), fh)
        fh.write("\n")


def load_network(path) -> FeedForwardNet:
    with open(path, "r", encoding="utf-8") as fh:
        return net_from_json_dict(json.load(fh))
