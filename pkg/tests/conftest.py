import os

import numpy as np

from netcert.model import Network, forward_batch

DATA = os.path.join(os.path.dirname(__file__), "data")


def data_path(name: str) -> str:
    return os.path.join(DATA, name)


def toy_relu_net() -> Network:
    # z2 = relu(x), one input, one hidden neuron
    return Network((np.array([[1.0]]), np.array([[1.0]])),
                   (np.zeros(1), np.zeros(1)), "relu")


def linear_two_class_net() -> Network:
    # F(x) = (x, -x) exactly, via relu(x) - relu(-x)
    w1 = np.array([[1.0], [-1.0]])
    w2 = np.array([[1.0, -1.0], [-1.0, 1.0]])
    return Network((w1, w2), (np.zeros(2), np.zeros(2)), "relu")


def boundary_sample(net: Network, seed: int, n_cand: int = 300):
    """A sample point with a small top-2 logit gap and its predicted label."""
    rng = np.random.default_rng(seed)
    cands = rng.uniform(-1.0, 1.0, (n_cand, net.n))
    logits = forward_batch(net, cands)
    part = np.partition(logits, -2, axis=1)
    gaps = part[:, -1] - part[:, -2]
    idx = int(np.argmin(gaps))
    return cands[idx], int(np.argmax(logits[idx]))


def positive_bias_relu_net(seed: int, widths, margin: float = 0.5,
                           x0=None, eps: float = 0.3):
    """Random ReLU net rebiased so every hidden pre-activation stays >= margin
    over the inf-ball (the network is affine there)."""
    rng = np.random.default_rng(seed)
    weights = [rng.uniform(-1, 1, (widths[k], widths[k - 1]))
               for k in range(1, len(widths))]
    biases = []
    x0 = np.zeros(widths[0]) if x0 is None else np.asarray(x0, float)
    lo, hi = x0 - eps, x0 + eps
    for k, w in enumerate(weights, start=1):
        wp, wn = np.maximum(w, 0), np.minimum(w, 0)
        zmin = wp @ lo + wn @ hi
        zmax = wp @ hi + wn @ lo
        if k < len(weights):
            b = margin - zmin
            biases.append(b)
            lo, hi = zmin + b, zmax + b  # relu is identity on [margin, ...]
        else:
            biases.append(rng.uniform(-1, 1, w.shape[0]))
    return Network(tuple(weights), tuple(biases), "relu")
