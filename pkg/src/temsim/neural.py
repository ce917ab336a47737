"""Dense neural-network substrate: forward/backward passes and Adam.

Hand-rolled reverse-mode gradients specialized to single-hidden-layer ReLU
networks with a Linear, Tanh, or LogSoftmax head; enough for the four agent
network shapes and small enough to audit.  All math is float64.  Networks are
plain values: ``forward`` is pure, ``adam_step`` mutates parameters in place.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np


class Head(Enum):
    LINEAR = "linear"
    TANH = "tanh"
    LOG_SOFTMAX = "log_softmax"


class DimensionError(ValueError):
    """Input or gradient shape does not match the network."""


@dataclass
class Mlp:
    weights: list[np.ndarray]  # layer l maps (fan_in, fan_out)
    biases: list[np.ndarray]
    head: Head

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def parameters(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out


def init_mlp(sizes: tuple[int, ...], head: Head, rng: np.random.Generator) -> Mlp:
    """Uniform +-1/sqrt(fan_in) weights, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(weights=weights, biases=biases, head=head)


def clone_mlp(net: Mlp) -> Mlp:
    return Mlp(
        weights=[w.copy() for w in net.weights],
        biases=[b.copy() for b in net.biases],
        head=net.head,
    )


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # activation entering each layer
    pre_activations: list[np.ndarray]
    output: np.ndarray
    squeezed: bool


@dataclass
class GradientRecord:
    weight_grads: list[np.ndarray]
    bias_grads: list[np.ndarray]
    input_grad: np.ndarray

    def parameters(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weight_grads, self.bias_grads):
            out.extend((w, b))
        return out


def _as_batch(x: np.ndarray, width: int, what: str) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    squeezed = arr.ndim == 1
    if squeezed:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != width:
        raise DimensionError(f"{what} must have width {width}, got shape {arr.shape}")
    return arr, squeezed


def log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def forward(net: Mlp, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """ReLU hidden layers, head on the last affine output.

    Accepts a single input vector or a (batch, width) matrix; the output
    mirrors the input's dimensionality.
    """
    a, squeezed = _as_batch(x, net.weights[0].shape[0], "input")
    inputs, pre = [], []
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(a)
        z = a @ w + b
        pre.append(z)
        a = np.maximum(z, 0.0) if l < last else z
    if net.head is Head.TANH:
        y = np.tanh(a)
    elif net.head is Head.LOG_SOFTMAX:
        y = log_softmax(a)
    else:
        y = a
    cache = ForwardCache(inputs=inputs, pre_activations=pre, output=y, squeezed=squeezed)
    return (y[0] if squeezed else y), cache


def backward(net: Mlp, cache: ForwardCache, upstream: np.ndarray) -> GradientRecord:
    """Exact reverse-mode gradients for all parameters and the input.

    ``upstream`` is dL/d(output) with the same shape the matching forward
    call returned.  Batched upstreams produce batch-summed parameter
    gradients and per-row input gradients.
    """
    out_width = net.weights[-1].shape[1]
    up, _ = _as_batch(upstream, out_width, "upstream gradient")
    if up.shape[0] != cache.inputs[0].shape[0]:
        raise DimensionError("upstream batch size does not match the cached forward")

    y = cache.output
    if net.head is Head.TANH:
        delta = up * (1.0 - y * y)
    elif net.head is Head.LOG_SOFTMAX:
        probs = np.exp(y)
        delta = up - probs * up.sum(axis=-1, keepdims=True)
    else:
        delta = up

    weight_grads: list[np.ndarray] = [np.empty(0)] * len(net.weights)
    bias_grads: list[np.ndarray] = [np.empty(0)] * len(net.biases)
    for l in range(len(net.weights) - 1, -1, -1):
        weight_grads[l] = cache.inputs[l].T @ delta
        bias_grads[l] = delta.sum(axis=0)
        delta = delta @ net.weights[l].T
        if l > 0:
            delta = delta * (cache.pre_activations[l - 1] > 0.0)
    input_grad = delta[0] if cache.squeezed else delta
    return GradientRecord(weight_grads=weight_grads, bias_grads=bias_grads, input_grad=input_grad)


def input_gradient(critic: Mlp, observation: np.ndarray, action: np.ndarray) -> np.ndarray:
    """d(critic output)/d(action) for a scalar critic over [observation || action]."""
    obs = np.asarray(observation, dtype=np.float64)
    act = np.asarray(action, dtype=np.float64)
    if obs.ndim != 1 or act.ndim != 1:
        raise DimensionError("observation and action must be vectors")
    x = np.concatenate([obs, act])
    _, cache = forward(critic, x)
    grad = backward(critic, cache, np.ones(critic.weights[-1].shape[1])).input_grad
    if obs.size + act.size != grad.size:
        raise DimensionError("action slice out of bounds")
    return grad[obs.size:]


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    alpha: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    skipped: int = field(default=0)  # updates dropped due to non-finite gradients


def adam_init(params: list[np.ndarray], alpha: float = 1e-4, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
        alpha=alpha,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
    )


def adam_step(
    state: AdamState,
    params: list[np.ndarray],
    grads: list[np.ndarray],
    maximize: bool = False,
) -> bool:
    """One bias-corrected Adam update, in place; descent unless ``maximize``.

    Non-finite gradients skip the update (moments untouched) and are counted
    in ``state.skipped``.  Returns True when the update was applied.
    """
    if len(params) != len(state.m) or len(grads) != len(params):
        raise DimensionError("parameter/gradient lists do not match the Adam state")
    if not all(np.isfinite(g).all() for g in grads):
        state.skipped += 1
        return False
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if maximize:
            g = -g
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.alpha * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return True


# ---------------------------------------------------------------------------
# Checkpointing: one .npy per tensor plus a JSON manifest, byte-reproducible


def save_tensors(directory: str | Path, tensors: dict[str, np.ndarray], meta: dict) -> None:
    """Write tensors and metadata; reloading round-trips bit-exactly."""
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {"meta": meta, "tensors": {}}
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype=np.float64)
        np.save(path / f"{name}.npy", arr)
        manifest["tensors"][name] = list(arr.shape)
    with open(path / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_tensors(directory: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(directory)
    with open(path / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    tensors = {}
    for name, shape in manifest["tensors"].items():
        arr = np.load(path / f"{name}.npy")
        if list(arr.shape) != shape:
            raise DimensionError(f"checkpoint tensor {name} has shape {arr.shape}, expected {shape}")
        tensors[name] = arr
    return tensors, manifest["meta"]


def mlp_tensors(net: Mlp, prefix: str) -> dict[str, np.ndarray]:
    out = {}
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        out[f"{prefix}.w{l}"] = w
        out[f"{prefix}.b{l}"] = b
    return out


def mlp_from_tensors(tensors: dict[str, np.ndarray], prefix: str, head: Head) -> Mlp:
    weights, biases = [], []
    l = 0
    while f"{prefix}.w{l}" in tensors:
        weights.append(tensors[f"{prefix}.w{l}"].copy())
        biases.append(tensors[f"{prefix}.b{l}"].copy())
        l += 1
    if not weights:
        raise DimensionError(f"no tensors found for network {prefix!r}")
    return Mlp(weights=weights, biases=biases, head=head)
