"""Small multilayer perceptrons over flat float64 parameter vectors.

All model state lives in a single 1-D numpy array so that parameter
arithmetic (averaging, displacement gradients, interpolation) is plain
vector algebra.  The flattening order is fixed: for each layer, the
weight matrix in row-major order followed by its bias vector.

Every function here is pure; nothing mutates its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("tanh", "relu")
LOSS_KINDS = ("softmax_cross_entropy", "squared_error")


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description: layer sizes, hidden activation, loss."""

    layer_sizes: tuple[int, ...]
    activation: str = "tanh"
    loss_kind: str = "softmax_cross_entropy"

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least an input and an output layer")
        if any(s < 1 for s in self.layer_sizes):
            raise ValueError(f"layer sizes must be positive, got {self.layer_sizes}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.loss_kind!r}")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def param_count(self) -> int:
        return sum((fan_in + 1) * fan_out for fan_in, fan_out in self.layer_pairs())

    def layer_pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.layer_sizes[:-1], self.layer_sizes[1:]))

    def split(self, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """View a flat parameter vector as [(W, b), ...] per layer."""
        params = self.check_params(params)
        out = []
        pos = 0
        for fan_in, fan_out in self.layer_pairs():
            w = params[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out)
            pos += fan_in * fan_out
            b = params[pos : pos + fan_out]
            pos += fan_out
            out.append((w, b))
        return out

    def check_params(self, params: np.ndarray) -> np.ndarray:
        params = np.asarray(params, dtype=np.float64)
        if params.ndim != 1 or params.size != self.param_count:
            raise ValueError(
                f"parameter vector has size {params.size}, spec requires {self.param_count}"
            )
        if not np.all(np.isfinite(params)):
            raise ValueError("parameter vector contains non-finite entries")
        return params


@dataclass
class Batch:
    """A labelled minibatch tagged with the domain it was drawn from.

    ``targets`` holds integer class ids (1-D) for classification or real
    target vectors (2-D) for regression.
    """

    inputs: np.ndarray
    targets: np.ndarray
    domain_id: int = -1

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets)
        if self.inputs.ndim != 2 or self.inputs.shape[0] < 1:
            raise ValueError("batch inputs must be a non-empty (n, d) matrix")
        if self.targets.shape[0] != self.inputs.shape[0]:
            raise ValueError(
                f"{self.targets.shape[0]} targets for {self.inputs.shape[0]} inputs"
            )

    @property
    def size(self) -> int:
        return self.inputs.shape[0]


def _check_batch(spec: NetworkSpec, batch: Batch) -> None:
    if batch.inputs.shape[1] != spec.input_dim:
        raise ValueError(
            f"batch input dim {batch.inputs.shape[1]} != network input dim {spec.input_dim}"
        )
    if spec.loss_kind == "softmax_cross_entropy":
        if batch.targets.ndim != 1 or not np.issubdtype(batch.targets.dtype, np.integer):
            raise ValueError("classification targets must be a 1-D integer array")
        if batch.targets.min() < 0 or batch.targets.max() >= spec.output_dim:
            raise ValueError(
                f"class id out of range for {spec.output_dim}-way output layer"
            )
    else:
        targets = np.asarray(batch.targets, dtype=np.float64)
        if targets.ndim != 2 or targets.shape[1] != spec.output_dim:
            raise ValueError(
                f"regression targets must be (n, {spec.output_dim}), got {targets.shape}"
            )


def init_params(spec: NetworkSpec, seed: int) -> np.ndarray:
    """Deterministic init: W ~ U(-1, 1)/sqrt(fan_in) per layer, biases zero."""
    rng = np.random.default_rng(seed)
    chunks = []
    for fan_in, fan_out in spec.layer_pairs():
        scale = 1.0 / np.sqrt(fan_in)
        chunks.append(rng.uniform(-scale, scale, size=fan_in * fan_out))
        chunks.append(np.zeros(fan_out))
    return np.concatenate(chunks)


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    return np.tanh(z) if kind == "tanh" else np.maximum(z, 0.0)


def _activate_deriv(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    return (z > 0.0).astype(np.float64)


def _forward_pass(spec: NetworkSpec, params: np.ndarray, inputs: np.ndarray):
    """Returns (pre-activations per layer, activations per layer incl. input)."""
    layers = spec.split(params)
    a = np.asarray(inputs, dtype=np.float64)
    pre, acts = [], [a]
    for idx, (w, b) in enumerate(layers):
        z = a @ w + b
        pre.append(z)
        a = z if idx == len(layers) - 1 else _activate(z, spec.activation)
        acts.append(a)
    return pre, acts


def forward_outputs(spec: NetworkSpec, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Raw network outputs (pre-loss logits or predictions), shape (n, output_dim)."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != spec.input_dim:
        raise ValueError(f"inputs must be (n, {spec.input_dim}), got {inputs.shape}")
    _, acts = _forward_pass(spec, params, inputs)
    return acts[-1]


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def forward_loss(spec: NetworkSpec, params: np.ndarray, batch: Batch) -> float:
    """Mean loss over the batch (non-negative for both loss kinds)."""
    _check_batch(spec, batch)
    outputs = forward_outputs(spec, params, batch.inputs)
    n = batch.size
    if spec.loss_kind == "softmax_cross_entropy":
        log_p = _log_softmax(outputs)
        return float(-log_p[np.arange(n), batch.targets].mean())
    diff = outputs - np.asarray(batch.targets, dtype=np.float64)
    return float(0.5 * np.sum(diff * diff) / n)


def backward(spec: NetworkSpec, params: np.ndarray, batch: Batch) -> np.ndarray:
    """Analytic gradient of forward_loss with respect to the flat parameters."""
    _check_batch(spec, batch)
    pre, acts = _forward_pass(spec, params, batch.inputs)
    layers = spec.split(params)
    n = batch.size

    outputs = acts[-1]
    if spec.loss_kind == "softmax_cross_entropy":
        probs = np.exp(_log_softmax(outputs))
        probs[np.arange(n), batch.targets] -= 1.0
        delta = probs / n
    else:
        delta = (outputs - np.asarray(batch.targets, dtype=np.float64)) / n

    grads: list[np.ndarray] = [None] * len(layers)
    for idx in range(len(layers) - 1, -1, -1):
        w, _ = layers[idx]
        gw = acts[idx].T @ delta
        gb = delta.sum(axis=0)
        grads[idx] = np.concatenate([gw.ravel(), gb])
        if idx > 0:
            delta = (delta @ w.T) * _activate_deriv(pre[idx - 1], spec.activation)
    return np.concatenate(grads)


def central_diff(f, x: np.ndarray, h: float) -> np.ndarray:
    """Central-difference gradient estimate of a scalar function, per coordinate."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(x)
    for i in range(x.size):
        bumped = x.copy()
        bumped[i] = x[i] + h
        hi = f(bumped)
        bumped[i] = x[i] - h
        lo = f(bumped)
        grad[i] = (hi - lo) / (2.0 * h)
    return grad


def finite_diff_grad(
    spec: NetworkSpec, params: np.ndarray, batch: Batch, h: float = 1e-5
) -> np.ndarray:
    """Finite-difference oracle for backward; intentionally independent of it."""
    params = spec.check_params(params)
    return central_diff(lambda p: forward_loss(spec, p, batch), params, h)


def predict_classes(spec: NetworkSpec, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    return np.argmax(forward_outputs(spec, params, inputs), axis=1)
