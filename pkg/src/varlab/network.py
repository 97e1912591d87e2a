"""Fully connected networks: parameters, initialization, forward/backward passes.

Layout conventions
------------------
A hidden-only network maps R^d -> R^d through L activated layers
``z_k = W_k s_{k-1} + b_k``, ``s_k = phi(z_k)`` with ``s_0 = x``.

The extended network adds an input layer (affine + activation, d x in_dim) in
front and a purely affine output layer (out_dim x d) at the end. Only the
hidden layers count towards the parameter budget ``(d*d + d) * L``.

Weight matrices are stored as (fan_out, fan_in) arrays. Batched inputs are
row-stacked, so a batch pass computes ``S @ W.T + b``.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from .numerics import DegenerateMatrixError, Rng, gaussian_matrix, orthogonalize

__all__ = [
    "Activation",
    "InitScheme",
    "NetworkConfig",
    "ParameterSet",
    "ForwardTrace",
    "default_scheme",
    "sample_layer",
    "init_params",
    "forward",
    "backward",
    "loss_and_gradient",
    "input_jacobian",
]


def _sigmoid(t):
    t = np.asarray(t, dtype=np.float64)
    e = np.exp(-np.abs(t))
    return np.where(t >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


class Activation(str, enum.Enum):
    SIGMOID = "sigmoid"
    RELU = "relu"
    ABS = "abs"

    def __call__(self, t):
        if self is Activation.RELU:
            return np.maximum(t, 0.0)
        if self is Activation.ABS:
            return np.abs(t)
        return _sigmoid(t)

    def derivative(self, t):
        # phi'(0) = 0 at the relu/abs kink
        if self is Activation.RELU:
            return (np.asarray(t) > 0).astype(np.float64)
        if self is Activation.ABS:
            return np.sign(t).astype(np.float64)
        s = _sigmoid(t)
        return s * (1.0 - s)

    @property
    def has_kink(self) -> bool:
        return self is not Activation.SIGMOID


@dataclass(frozen=True)
class InitScheme:
    """How weights are drawn.

    ``normal`` uses the fixed std ``sigma``; ``kaiming`` and ``xavier`` use
    sqrt(2/fan_in) and sqrt(1/fan_in); ``orthogonal`` orthonormalizes a
    standard Gaussian sample with no multiplier. Biases are always
    N(0, bias_sigma**2).
    """

    kind: str = "kaiming"
    sigma: float | None = None
    bias_sigma: float = 1.0

    KINDS = ("normal", "kaiming", "xavier", "orthogonal")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown init scheme {self.kind!r}")
        if self.kind == "normal" and not (self.sigma and self.sigma > 0):
            raise ValueError("normal init needs a positive sigma")
        if self.bias_sigma < 0:
            raise ValueError("bias_sigma must be nonnegative")

    @classmethod
    def parse(cls, text: str) -> "InitScheme":
        """``kaiming``, ``xavier``, ``orthogonal`` or ``normal:<sigma>``."""
        if text.startswith("normal"):
            _, _, sigma = text.partition(":")
            return cls("normal", float(sigma or 1.0))
        return cls(text)

    def label(self) -> str:
        return f"normal:{self.sigma:g}" if self.kind == "normal" else self.kind

    def weight_sigma(self, fan_in: int) -> float | None:
        if self.kind == "normal":
            return float(self.sigma)
        if self.kind == "kaiming":
            return float(np.sqrt(2.0 / fan_in))
        if self.kind == "xavier":
            return float(np.sqrt(1.0 / fan_in))
        return None


def default_scheme(activation: Activation | str) -> InitScheme:
    """Initialization paired with each activation in the experiments."""
    act = Activation(activation)
    if act is Activation.SIGMOID:
        return InitScheme("normal", 1.0)
    if act is Activation.RELU:
        return InitScheme("kaiming")
    return InitScheme("xavier")


@dataclass(frozen=True)
class NetworkConfig:
    hidden_layers: int
    width: int
    activation: Activation = Activation.RELU
    io_dims: tuple[int, int] | None = None

    def __post_init__(self):
        if self.hidden_layers < 1 or self.width < 1:
            raise ValueError("hidden_layers and width must be >= 1")
        object.__setattr__(self, "activation", Activation(self.activation))
        if self.io_dims is not None:
            i, o = self.io_dims
            if i < 1 or o < 1:
                raise ValueError("io dims must be >= 1")
            object.__setattr__(self, "io_dims", (int(i), int(o)))

    @property
    def hidden_param_count(self) -> int:
        d = self.width
        return (d * d + d) * self.hidden_layers


@dataclass
class ParameterSet:
    activation: Activation
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    w_in: np.ndarray | None = None
    b_in: np.ndarray | None = None
    w_out: np.ndarray | None = None
    b_out: np.ndarray | None = None

    def __post_init__(self):
        self.activation = Activation(self.activation)
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need matching, nonempty weight and bias lists")
        if (self.w_in is None) != (self.w_out is None):
            raise ValueError("input and output layers come as a pair")
        prev = self.weights[0].shape[1] if self.w_in is None else self.w_in.shape[1]
        for W, b in self.layers():
            if W.ndim != 2 or b.shape != (W.shape[0],) or W.shape[1] != prev:
                raise ValueError("incompatible layer shapes")
            prev = W.shape[0]

    @property
    def extended(self) -> bool:
        return self.w_in is not None

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        return (self.w_in if self.extended else self.weights[0]).shape[1]

    @property
    def out_dim(self) -> int:
        return (self.w_out if self.extended else self.weights[-1]).shape[0]

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        pairs = list(zip(self.weights, self.biases))
        if self.extended:
            pairs = [(self.w_in, self.b_in)] + pairs + [(self.w_out, self.b_out)]
        return pairs

    def activated(self) -> list[bool]:
        n = len(self.weights)
        return [True] * (n + 1) + [False] if self.extended else [True] * n

    def param_count(self) -> dict[str, int]:
        hidden = sum(W.size + b.size for W, b in zip(self.weights, self.biases))
        io = 0
        if self.extended:
            io = self.w_in.size + self.b_in.size + self.w_out.size + self.b_out.size
        return {"hidden": hidden, "io": io, "total": hidden + io}

    def flat_arrays(self) -> list[np.ndarray]:
        """Weights then biases of every layer, in layer order."""
        out = []
        for W, b in self.layers():
            out.extend((W, b))
        return out

    @classmethod
    def from_layers(cls, activation, layers, extended: bool) -> "ParameterSet":
        Ws = [np.asarray(W, dtype=np.float64) for W, _ in layers]
        bs = [np.asarray(b, dtype=np.float64) for _, b in layers]
        if extended:
            return cls(activation, Ws[1:-1], bs[1:-1], Ws[0], bs[0], Ws[-1], bs[-1])
        return cls(activation, Ws, bs)

    def copy(self) -> "ParameterSet":
        return ParameterSet.from_layers(
            self.activation, [(W.copy(), b.copy()) for W, b in self.layers()], self.extended)

    def hidden_only(self) -> "ParameterSet":
        return ParameterSet(self.activation, list(self.weights), list(self.biases))

    # JSON snapshot: {"activation", "hidden": [{"W": {...}, "b": {...}}], "input", "output"}
    def to_dict(self) -> dict:
        def enc(a):
            return {"shape": list(a.shape), "values": a.ravel().tolist()}

        def pair(W, b):
            return {"W": enc(W), "b": enc(b)}

        out = {
            "activation": self.activation.value,
            "hidden": [pair(W, b) for W, b in zip(self.weights, self.biases)],
            "input": None,
            "output": None,
        }
        if self.extended:
            out["input"] = pair(self.w_in, self.b_in)
            out["output"] = pair(self.w_out, self.b_out)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ParameterSet":
        def dec(e):
            return np.asarray(e["values"], dtype=np.float64).reshape(e["shape"])

        hidden = [(dec(p["W"]), dec(p["b"])) for p in data["hidden"]]
        if data.get("input") is not None:
            layers = [(dec(data["input"]["W"]), dec(data["input"]["b"]))] + hidden
            layers.append((dec(data["output"]["W"]), dec(data["output"]["b"])))
            return cls.from_layers(data["activation"], layers, extended=True)
        return cls.from_layers(data["activation"], hidden, extended=False)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ParameterSet":
        return cls.from_dict(json.loads(text))


@dataclass
class ForwardTrace:
    """Per-layer pre-activations ``z`` and outputs ``s``.

    ``s[0]`` is the network input and ``s[k]`` the output of layer k, so
    ``s[k] = phi(z[k-1])`` for activated layers. Arrays carry a leading batch
    axis when the input was a batch.
    """

    z: list[np.ndarray] = field(default_factory=list)
    s: list[np.ndarray] = field(default_factory=list)

    @property
    def output(self) -> np.ndarray:
        return self.s[-1]


def sample_layer(fan_out: int, fan_in: int, scheme: InitScheme, rng: Rng):
    """Draw one (W, b) pair. Weights first, then biases, from the same stream."""
    if scheme.kind == "orthogonal":
        while True:
            try:
                W = orthogonalize(gaussian_matrix(fan_out, fan_in, 1.0, rng))
                break
            except DegenerateMatrixError:
                continue
    else:
        W = gaussian_matrix(fan_out, fan_in, scheme.weight_sigma(fan_in), rng)
    if scheme.bias_sigma > 0:
        b = rng.normal(0.0, scheme.bias_sigma, fan_out)
    else:
        b = np.zeros(fan_out)
    return W, b


# Rng child indices: hidden layer k uses child(k), k = 1..L.
INPUT_LAYER_KEY = 0
OUTPUT_LAYER_KEY = 1_000_000


def init_params(config: NetworkConfig, scheme: InitScheme, rng: Rng) -> ParameterSet:
    d = config.width
    layers = [sample_layer(d, d, scheme, rng.child(k)) for k in range(1, config.hidden_layers + 1)]
    if config.io_dims is None:
        return ParameterSet.from_layers(config.activation, layers, extended=False)
    i, o = config.io_dims
    first = sample_layer(d, i, scheme, rng.child(INPUT_LAYER_KEY))
    last = sample_layer(o, d, scheme, rng.child(OUTPUT_LAYER_KEY))
    return ParameterSet.from_layers(config.activation, [first] + layers + [last], extended=True)


def forward(params: ParameterSet, x) -> ForwardTrace:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != params.in_dim:
        raise ValueError(f"input of shape {x.shape} does not match in_dim={params.in_dim}")
    phi = params.activation
    trace = ForwardTrace(s=[x])
    s = x
    for (W, b), act in zip(params.layers(), params.activated()):
        z = s @ W.T + b
        s = phi(z) if act else z
        trace.z.append(z)
        trace.s.append(s)
    return trace


def backward(params: ParameterSet, trace: ForwardTrace, dout) -> list[tuple[np.ndarray, np.ndarray]]:
    """Reverse-mode pass: gradients of ``sum(dout * output)`` per layer."""
    phi = params.activation
    delta = np.asarray(dout, dtype=np.float64)
    batched = delta.ndim == 2
    layers = params.layers()
    acts = params.activated()
    grads = [None] * len(layers)
    for k in range(len(layers) - 1, -1, -1):
        if acts[k]:
            delta = delta * phi.derivative(trace.z[k])
        s_prev = trace.s[k]
        if batched:
            grads[k] = (delta.T @ s_prev, delta.sum(axis=0))
        else:
            grads[k] = (np.outer(delta, s_prev), delta.copy())
        if k > 0:
            delta = delta @ layers[k][0]
    return grads


def loss_and_gradient(params: ParameterSet, X, Y) -> tuple[float, ParameterSet]:
    """Sum of squared errors over the batch and its gradient."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    if Y.shape != (X.shape[0], params.out_dim):
        raise ValueError(f"targets of shape {Y.shape} do not match outputs")
    trace = forward(params, X)
    r = trace.output - Y
    loss = float(np.sum(r * r))
    grads = backward(params, trace, 2.0 * r)
    return loss, ParameterSet.from_layers(params.activation, grads, params.extended)


def input_jacobian(params: ParameterSet, x) -> np.ndarray:
    """d output / d input at a single point, shape (out_dim, in_dim)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("input_jacobian takes a single point")
    trace = forward(params, x)
    phi = params.activation
    J = np.eye(params.in_dim)
    for k, ((W, _), act) in enumerate(zip(params.layers(), params.activated())):
        J = W @ J
        if act:
            J = phi.derivative(trace.z[k])[:, None] * J
    return J
