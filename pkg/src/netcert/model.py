"""Fully connected network model, perturbation specification, and serialization.

A network is an ordered list of affine layers (weight matrix + bias vector)
with one activation applied between layers but not after the last one, so the
outputs are raw logits.  The interchange format is a single JSON document
holding the activation name, the width chain, and row-major weight arrays,
which keeps fixtures human-diffable and trivial to emit from any training
stack.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

SUPPORTED_ACTIVATIONS = ("relu", "sigmoid", "tanh")


class ModelError(ValueError):
    """Raised for malformed network files or inconsistent network data."""


def relu(z):
    return np.maximum(np.asarray(z, dtype=float), 0.0)


def relu_deriv(z):
    # subgradient 0 at the kink
    return (np.asarray(z, dtype=float) > 0.0).astype(float)


def relu_deriv2(z):
    return np.zeros_like(np.asarray(z, dtype=float))


def sigmoid(z):
    # exp overflow for very negative z yields inf and a correct 0.0 result
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=float)))


def sigmoid_deriv(z):
    s = sigmoid(z)
    return s * (1.0 - s)


def sigmoid_deriv2(z):
    s = sigmoid(z)
    return s * (1.0 - s) * (1.0 - 2.0 * s)


def tanh(z):
    return np.tanh(np.asarray(z, dtype=float))


def tanh_deriv(z):
    t = np.tanh(np.asarray(z, dtype=float))
    return 1.0 - t * t


def tanh_deriv2(z):
    t = np.tanh(np.asarray(z, dtype=float))
    return -2.0 * t * (1.0 - t * t)


#: activation name -> (function, first derivative, second derivative)
ACTIVATIONS = {
    "relu": (relu, relu_deriv, relu_deriv2),
    "sigmoid": (sigmoid, sigmoid_deriv, sigmoid_deriv2),
    "tanh": (tanh, tanh_deriv, tanh_deriv2),
}


def _as_readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Network:
    """An m-layer perceptron: z(k) = W(k) a(k-1) + b(k), a(k) = act(z(k)).

    Immutable after construction; safe to share across concurrent workers.
    """

    weights: tuple
    biases: tuple
    activation: str

    def __post_init__(self):
        if self.activation not in SUPPORTED_ACTIVATIONS:
            raise ModelError(f"unknown activation {self.activation!r}")
        ws = tuple(_as_readonly(w) for w in self.weights)
        bs = tuple(_as_readonly(b) for b in self.biases)
        if len(ws) != len(bs):
            raise ModelError("weights and biases must have the same layer count")
        if len(ws) < 2:
            raise ModelError("need at least 2 layers (one hidden nonlinearity)")
        for idx, (w, b) in enumerate(zip(ws, bs), start=1):
            if w.ndim != 2 or b.ndim != 1:
                raise ModelError(f"layer {idx}: weights must be 2-d, bias 1-d")
            if w.shape[0] != b.shape[0]:
                raise ModelError(
                    f"layer {idx}: bias length {b.shape[0]} != rows {w.shape[0]}"
                )
            if idx > 1 and w.shape[1] != ws[idx - 2].shape[0]:
                raise ModelError(
                    f"layer {idx}: expects {w.shape[1]} inputs but layer "
                    f"{idx - 1} outputs {ws[idx - 2].shape[0]}"
                )
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ModelError(f"layer {idx}: non-finite entry")
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    @property
    def m(self) -> int:
        """Number of affine layers."""
        return len(self.weights)

    @property
    def n(self) -> int:
        """Input dimension."""
        return self.weights[0].shape[1]

    @property
    def widths(self) -> tuple:
        """Width chain (n, n_1, ..., n_m)."""
        return (self.n,) + tuple(w.shape[0] for w in self.weights)

    def layer_width(self, k: int) -> int:
        """Width n_k of layer k (1-based)."""
        return self.weights[k - 1].shape[0]


@dataclass(frozen=True)
class PerturbationSpec:
    """Input ball: all x with ||x - x0||_p <= epsilon, p in {1, 2, inf}."""

    x0: np.ndarray
    p: float
    epsilon: float

    def __post_init__(self):
        x0 = _as_readonly(np.atleast_1d(self.x0))
        if x0.ndim != 1 or not np.isfinite(x0).all():
            raise ModelError("x0 must be a finite vector")
        p = float(self.p)
        if p not in (1.0, 2.0, math.inf):
            raise ModelError(f"unsupported norm order p={self.p}")
        if not (self.epsilon >= 0.0):
            raise ModelError("epsilon must be nonnegative")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "epsilon", float(self.epsilon))

    @property
    def q(self) -> float:
        """Holder conjugate of p (1/p + 1/q = 1)."""
        if self.p == 1.0:
            return math.inf
        if self.p == math.inf:
            return 1.0
        return 2.0


def forward(net: Network, x) -> np.ndarray:
    """Evaluate the network: returns the pre-activation of the last layer."""
    x = np.asarray(x, dtype=float)
    if x.shape != (net.n,):
        raise ModelError(f"input must have shape ({net.n},), got {x.shape}")
    act = ACTIVATIONS[net.activation][0]
    a = x
    for idx, (w, b) in enumerate(zip(net.weights, net.biases), start=1):
        z = w @ a + b
        a = act(z) if idx < net.m else z
    return a


def forward_batch(net: Network, xs: np.ndarray) -> np.ndarray:
    """Evaluate the network on rows of ``xs`` (N x n). Returns N x n_m."""
    xs = np.asarray(xs, dtype=float)
    act = ACTIVATIONS[net.activation][0]
    a = xs
    for idx, (w, b) in enumerate(zip(net.weights, net.biases), start=1):
        z = a @ w.T + b
        a = act(z) if idx < net.m else z
    return a


def preactivations(net: Network, xs: np.ndarray) -> list:
    """Pre-activation matrices z(k) for each layer, for rows of ``xs``."""
    xs = np.asarray(xs, dtype=float)
    act = ACTIVATIONS[net.activation][0]
    a = xs
    out = []
    for idx, (w, b) in enumerate(zip(net.weights, net.biases), start=1):
        z = a @ w.T + b
        out.append(z)
        if idx < net.m:
            a = act(z)
    return out


def save_network(net: Network, path) -> None:
    doc = {
        "activation": net.activation,
        "widths": list(net.widths),
        "weights": [w.reshape(-1).tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_network(path) -> Network:
    """Load and validate a network from its JSON interchange file."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"cannot parse network file {path}: {exc}") from exc
    try:
        widths = [int(w) for w in doc["widths"]]
        activation = doc["activation"]
        raw_weights = doc["weights"]
        raw_biases = doc["biases"]
    except (KeyError, TypeError) as exc:
        raise ModelError(f"malformed network file {path}: {exc}") from exc
    if len(raw_weights) != len(widths) - 1 or len(raw_biases) != len(widths) - 1:
        raise ModelError(
            f"{path}: expected {len(widths) - 1} weight/bias blocks for "
            f"width chain {widths}"
        )
    weights = []
    biases = []
    for k in range(1, len(widths)):
        flat = np.asarray(raw_weights[k - 1], dtype=float)
        if flat.size != widths[k] * widths[k - 1]:
            raise ModelError(
                f"{path}: layer {k} weights have {flat.size} entries, "
                f"expected {widths[k]}x{widths[k - 1]}"
            )
        weights.append(flat.reshape(widths[k], widths[k - 1]))
        biases.append(np.asarray(raw_biases[k - 1], dtype=float))
    return Network(tuple(weights), tuple(biases), activation)


def load_sample(path) -> tuple:
    """Load a sample file: returns (x0, label)."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
        x0 = np.asarray(doc["x0"], dtype=float)
        label = int(doc["label"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"cannot parse sample file {path}: {exc}") from exc
    return x0, label


def save_sample(x0, label, path) -> None:
    with open(path, "w") as fh:
        json.dump({"x0": np.asarray(x0, dtype=float).tolist(), "label": int(label)}, fh)
        fh.write("\n")


def generate_random_network(seed: int, widths, activation: str, scale: float = 1.0) -> Network:
    """Random network with i.i.d. uniform[-scale, scale] weights and biases.

    ``widths`` is the full width chain (n, n_1, ..., n_m); the draw order is
    fixed (per layer: weights then bias) so the result is deterministic per
    seed.
    """
    widths = [int(w) for w in widths]
    if len(widths) < 3:
        raise ModelError("widths must chain at least input, one hidden, output")
    if not scale > 0:
        raise ModelError("scale must be positive")
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for k in range(1, len(widths)):
        weights.append(rng.uniform(-scale, scale, size=(widths[k], widths[k - 1])))
        biases.append(rng.uniform(-scale, scale, size=widths[k]))
    return Network(tuple(weights), tuple(biases), activation)
