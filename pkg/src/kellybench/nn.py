"""
Minimal dense-network kernel
============================

Float64 forward and exact analytic backward passes for the fixed layer
set used by the agents: linear, ReLU, sigmoid, layer normalization, and
identity-skip residual blocks, plus an Adam-style optimizer and a
central-finite-difference gradient checker.

Conventions, fixed for reproducibility:

* activations are (batch, features) arrays; weights are (in, out);
* the ReLU subgradient at exactly 0 is 0;
* layer norm uses eps = 1e-5 inside the square root;
* any NaN/Inf produced by a forward or backward pass is a hard error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LAYER_NORM_EPS = 1e-5
PARAMS_FILE_TAG = "kellybench-params v1"


@dataclass
class Parameter:
    """A tensor with paired gradient storage and Adam moment buffers."""

    value: np.ndarray
    grad: np.ndarray = field(init=False)
    m: np.ndarray = field(init=False)
    v: np.ndarray = field(init=False)
    trainable: bool = True

    def __post_init__(self) -> None:
        self.value = np.asarray(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)


def _ensure_finite(arr: np.ndarray, context: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values in {context}")
    return arr


class Layer:
    """Base layer: forward caches whatever backward needs."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def parameters(self) -> list[Parameter]:
        return []

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        return []


class Linear(Layer):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 init: str = "xavier"):
        if init == "he":
            std = math.sqrt(2.0 / in_dim)
        elif init == "xavier":
            std = math.sqrt(2.0 / (in_dim + out_dim))
        else:
            raise ValueError(f"unknown init {init!r}")
        self.W = Parameter(std * rng.standard_normal((in_dim, out_dim)))
        self.b = Parameter(np.zeros(out_dim))
        self._x: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[1] != self.W.value.shape[0]:
            raise ValueError(f"linear expected {self.W.value.shape[0]} inputs, "
                             f"got {x.shape[1]}")
        self._x = x
        return _ensure_finite(x @ self.W.value + self.b.value, "linear forward")

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x = self._x
        self.W.grad += x.T @ grad_out
        self.b.grad += grad_out.sum(axis=0)
        return _ensure_finite(grad_out @ self.W.value.T, "linear backward")

    def parameters(self) -> list[Parameter]:
        return [self.W, self.b]

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        return [(prefix + "W", self.W), (prefix + "b", self.b)]


class ReLU(Layer):
    def __init__(self) -> None:
        self._mask: np.ndarray | None = None
        self.last_pre_activation: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.last_pre_activation = x
        self._mask = x > 0.0  # gradient at exactly 0 is 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return np.where(self._mask, grad_out, 0.0)


class Sigmoid(Layer):
    def __init__(self) -> None:
        self._y: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        # numerically stable split form
        y = np.empty_like(x)
        pos = x >= 0
        y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        y[~pos] = ex / (1.0 + ex)
        self._y = y
        return _ensure_finite(y, "sigmoid forward")

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        y = self._y
        return grad_out * y * (1.0 - y)


class LayerNorm(Layer):
    """Per-sample normalization to mean 0 / variance 1, then affine gain and bias."""

    def __init__(self, dim: int):
        if dim < 2:
            raise ValueError("layer norm needs a feature dimension >= 2")
        self.gain = Parameter(np.ones(dim))
        self.bias = Parameter(np.zeros(dim))
        self._xhat: np.ndarray | None = None
        self._inv_std: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        mean = x.mean(axis=1, keepdims=True)
        var = x.var(axis=1, keepdims=True)
        self._inv_std = 1.0 / np.sqrt(var + LAYER_NORM_EPS)
        self._xhat = (x - mean) * self._inv_std
        return _ensure_finite(self._xhat * self.gain.value + self.bias.value,
                              "layer_norm forward")

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        xhat, inv_std = self._xhat, self._inv_std
        self.gain.grad += (grad_out * xhat).sum(axis=0)
        self.bias.grad += grad_out.sum(axis=0)
        g = grad_out * self.gain.value
        grad_in = inv_std * (
            g
            - g.mean(axis=1, keepdims=True)
            - xhat * (g * xhat).mean(axis=1, keepdims=True)
        )
        return _ensure_finite(grad_in, "layer_norm backward")

    def parameters(self) -> list[Parameter]:
        return [self.gain, self.bias]

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        return [(prefix + "gain", self.gain), (prefix + "bias", self.bias)]


class ResidualBlock(Layer):
    """y = layer_norm(x + linear(relu(linear(x)))), widths all equal."""

    def __init__(self, dim: int, rng: np.random.Generator):
        self.fc1 = Linear(dim, dim, rng, init="he")
        self.relu = ReLU()
        self.fc2 = Linear(dim, dim, rng, init="xavier")
        self.norm = LayerNorm(dim)

    def forward(self, x: np.ndarray) -> np.ndarray:
        inner = self.fc2.forward(self.relu.forward(self.fc1.forward(x)))
        return self.norm.forward(x + inner)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        grad_sum = self.norm.backward(grad_out)
        grad_inner = self.fc1.backward(self.relu.backward(self.fc2.backward(grad_sum)))
        return grad_sum + grad_inner  # skip connection adds the identity term

    def parameters(self) -> list[Parameter]:
        return self.fc1.parameters() + self.fc2.parameters() + self.norm.parameters()

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        return (self.fc1.named_parameters(prefix + "fc1.")
                + self.fc2.named_parameters(prefix + "fc2.")
                + self.norm.named_parameters(prefix + "norm."))


class Sequential(Layer):
    def __init__(self, layers: list[Layer]):
        self.layers = layers

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        return grad_out

    def parameters(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer.parameters()]

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        return [pair for i, layer in enumerate(self.layers)
                for pair in layer.named_parameters(f"{prefix}{i}.")]


def zero_gradients(params: list[Parameter]) -> None:
    for p in params:
        p.grad[...] = 0.0


class Adam:
    """First/second-moment adaptive optimizer with bias correction."""

    def __init__(self, params: list[Parameter], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p in self.params:
            if not p.trainable:
                continue
            p.m[...] = self.beta1 * p.m + (1.0 - self.beta1) * p.grad
            p.v[...] = self.beta2 * p.v + (1.0 - self.beta2) * p.grad * p.grad
            p.value -= self.lr * (p.m / bc1) / (np.sqrt(p.v / bc2) + self.eps)

    def zero_grad(self) -> None:
        zero_gradients(self.params)


# ---------------------------------------------------------------------------
# verification

def iter_layers(layer: Layer):
    """Depth-first walk over a layer and all nested sub-layers."""
    yield layer
    children = layer.layers if isinstance(layer, Sequential) else [
        attr for attr in vars(layer).values() if isinstance(attr, Layer)
    ]
    for child in children:
        yield from iter_layers(child)


def min_relu_margin(layer: Layer) -> float:
    """Smallest |pre-activation| seen by any ReLU in the last forward pass.

    Used to resample gradient-check inputs that sit within the finite
    difference step of a ReLU kink.
    """
    margins = [float(np.min(np.abs(l.last_pre_activation)))
               for l in iter_layers(layer)
               if isinstance(l, ReLU) and l.last_pre_activation is not None]
    return min(margins) if margins else math.inf


def grad_check(network: Layer, x: np.ndarray, h: float = 1e-5,
               probe_seed: int = 0) -> float:
    """Central finite differences vs. analytic gradients for every parameter.

    The scalar probe loss is a seeded random projection of the network
    output (a plain sum is blind to directions a final layer norm maps to
    a constant).  Per tensor, the reported error is the largest absolute
    deviation normalized by the tensor's peak gradient magnitude (floored
    at 1e-6); the return value is the maximum over tensors.  Frozen
    parameters are skipped.  The caller is responsible for inputs where
    no ReLU kink lies within h (see min_relu_margin).
    """
    params = [p for p in network.parameters() if p.trainable]
    zero_gradients(network.parameters())
    out = network.forward(x)
    probe = np.random.default_rng(probe_seed).standard_normal(out.shape)
    network.backward(probe)
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.value.reshape(-1)
        numeric = np.empty_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            loss_plus = float((network.forward(x) * probe).sum())
            flat[i] = orig - h
            loss_minus = float((network.forward(x) * probe).sum())
            flat[i] = orig
            numeric[i] = (loss_plus - loss_minus) / (2.0 * h)
        scale = max(float(np.max(np.abs(a))), 1e-6)
        worst = max(worst, float(np.max(np.abs(a.reshape(-1) - numeric))) / scale)
    return worst


# ---------------------------------------------------------------------------
# parameter serialization

def save_parameters(path: str | Path, named: list[tuple[str, Parameter]],
                    moments: bool = False, manifest: str | None = None) -> None:
    """Versioned flat text file: name, shape, values (repr round trip)."""
    lines = [f"# {PARAMS_FILE_TAG}"]
    if manifest is not None:
        lines.append(f"# manifest {manifest}")
    lines.append(f"tensors {len(named)} moments {int(moments)}")
    for name, p in named:
        shape = " ".join(str(d) for d in p.value.shape)
        lines.append(f"tensor {name} {p.value.ndim} {shape}")
        lines.append(" ".join(repr(float(v)) for v in p.value.reshape(-1)))
        if moments:
            lines.append(" ".join(repr(float(v)) for v in p.m.reshape(-1)))
            lines.append(" ".join(repr(float(v)) for v in p.v.reshape(-1)))
    Path(path).write_text("\n".join(lines) + "\n")


def load_parameters(path: str | Path) -> dict[str, dict[str, np.ndarray]]:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith(f"# {PARAMS_FILE_TAG}"):
        raise ValueError(f"{path}: not a {PARAMS_FILE_TAG} file")
    body = [l for l in lines if not l.startswith("#")]
    head = body[0].split()
    n_tensors, moments = int(head[1]), bool(int(head[3]))
    out: dict[str, dict[str, np.ndarray]] = {}
    cursor = 1
    for _ in range(n_tensors):
        meta = body[cursor].split()
        name, ndim = meta[1], int(meta[2])
        shape = tuple(int(d) for d in meta[3: 3 + ndim])
        entry = {}
        entry["value"] = np.array([float(v) for v in body[cursor + 1].split()]).reshape(shape)
        cursor += 2
        if moments:
            entry["m"] = np.array([float(v) for v in body[cursor].split()]).reshape(shape)
            entry["v"] = np.array([float(v) for v in body[cursor + 1].split()]).reshape(shape)
            cursor += 2
        out[name] = entry
    return out


def restore_parameters(named: list[tuple[str, Parameter]],
                       loaded: dict[str, dict[str, np.ndarray]]) -> None:
    """Copy loaded tensors (and moments when present) into an existing network."""
    for name, p in named:
        if name not in loaded:
            raise ValueError(f"checkpoint is missing tensor {name}")
        entry = loaded[name]
        if entry["value"].shape != p.value.shape:
            raise ValueError(f"tensor {name}: checkpoint shape {entry['value'].shape} "
                             f"!= network shape {p.value.shape}")
        p.value[...] = entry["value"]
        if "m" in entry:
            p.m[...] = entry["m"]
            p.v[...] = entry["v"]
