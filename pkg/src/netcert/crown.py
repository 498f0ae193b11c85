"""Backward propagation of linear bounds with closed-form concretization.

To bound z(k)_i from below, start from the affine row of layer k and walk
back through the layers; at each activation the running row splits by sign:
nonnegative entries compose with the lower bounding line of that neuron,
nonpositive entries with the upper line (mirrored for an upper-sense bound).
The result is an affine function of the raw input whose extreme value over
the ball follows from the dual norm:

    gamma_lower = coeffs . x0 - eps * ||coeffs||_q + offset.

Layer-1 bounds are exact (the first layer is affine in the input); bounds
for k = 2..m come from the backward pass using the lines of layers < k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Network, PerturbationSpec
from . import relax
from .relax import LineSpace

#: elementwise slack allowed when asserting lower <= upper (float noise only)
_BOUND_ORDER_SLACK = 1e-9


def dual_norm(rows: np.ndarray, q: float) -> np.ndarray:
    """Row-wise q-norm (q = 1, 2 or inf) of a 2-d array."""
    rows = np.atleast_2d(rows)
    if q == 1.0:
        return np.abs(rows).sum(axis=1)
    if q == 2.0:
        return np.sqrt((rows * rows).sum(axis=1))
    if q == math.inf:
        return np.abs(rows).max(axis=1) if rows.shape[1] else np.zeros(len(rows))
    raise ValueError(f"unsupported dual norm order q={q}")


def dual_norm_grad(rows: np.ndarray, q: float) -> np.ndarray:
    """Row-wise (sub)gradient of the q-norm at ``rows``.

    q=1: sign per coordinate; q=2: rows normalized; q=inf: indicator of the
    first max-abs coordinate times its sign.
    """
    rows = np.atleast_2d(rows)
    if q == 1.0:
        return np.sign(rows)
    if q == 2.0:
        norms = dual_norm(rows, 2.0)
        out = np.zeros_like(rows)
        nz = norms > 0
        out[nz] = rows[nz] / norms[nz, None]
        return out
    if q == math.inf:
        out = np.zeros_like(rows)
        if rows.shape[1]:
            idx = np.abs(rows).argmax(axis=1)
            r = np.arange(rows.shape[0])
            out[r, idx] = np.sign(rows[r, idx])
        return out
    raise ValueError(f"unsupported dual norm order q={q}")


@dataclass(frozen=True)
class AffineBound:
    """One-sided affine bound on a neuron as a function of the raw input."""

    coeffs: np.ndarray
    offset: float
    sense: str                   # "lower" | "upper"
    gamma: float | None = None


@dataclass
class LayerLines:
    """Chosen bounding lines for every neuron of one layer."""

    slope_lower: np.ndarray
    intercept_lower: np.ndarray
    slope_upper: np.ndarray
    intercept_upper: np.ndarray
    # the free variable that generated each line; nan where the space is fixed
    var_lower: np.ndarray
    var_upper: np.ndarray
    spaces_lower: list
    spaces_upper: list

    def arrays(self):
        return (self.slope_lower, self.intercept_lower,
                self.slope_upper, self.intercept_upper)


@dataclass
class LineSet:
    """Bounding lines for layers 1..m-1.

    In self-consistent mode one set of lines is shared by every bound
    computation (``layers[v-1]`` holds layer v).  In per-neuron mode each
    target neuron (k, i) owns its own stack of lines for layers 1..k-1.
    """

    mode: str
    layers: list | None = None
    by_target: dict | None = None

    def lines_for(self, k: int, i: int | None = None) -> list:
        """Line arrays for layers 1..k-1, for target neuron i of layer k."""
        if self.mode == "self-consistent":
            if self.layers is None or len(self.layers) < k - 1:
                raise ValueError(f"missing lines for layers below {k}")
            return self.layers[:k - 1]
        if i is None:
            raise ValueError("per-neuron line set needs a target neuron")
        try:
            return self.by_target[(k, i)]
        except (KeyError, TypeError):
            raise ValueError(f"missing lines for target ({k}, {i})") from None


@dataclass
class LayerBounds:
    """Pre-activation bounds l(k) <= z(k) <= u(k); index k-1 holds layer k.

    Layer-1 entries are exact (affine over the ball); the last entries are
    the output bounds.
    """

    lower: list
    upper: list

    def layer(self, k: int):
        return self.lower[k - 1], self.upper[k - 1]

    @property
    def output_lower(self) -> np.ndarray:
        return self.lower[-1]

    @property
    def output_upper(self) -> np.ndarray:
        return self.upper[-1]


def default_variable(space: LineSpace) -> float | None:
    """Deterministic baseline pick for a one-variable line space.

    ReLU crossing intervals take slope 1 when u >= |l| (ties included) and 0
    otherwise; tangent families start at the midpoint of the admissible
    range.  Fixed spaces return None.
    """
    if space.kind == "fixed":
        return None
    if space.generator == "relu-slope":
        return 1.0 if space.u >= -space.l else 0.0
    return 0.5 * (space.var_lo + space.var_hi)


def default_chooser(space: LineSpace, layer: int = 0, neuron: int = 0,
                    target=None) -> float:
    """Variable chooser implementing the deterministic baseline rules."""
    return default_variable(space)


def choose_layer_lines(spaces_lower, spaces_upper, chooser, layer: int,
                       target=None) -> LayerLines:
    """Materialize one layer's lines; ``chooser`` picks the free variable of
    each one-variable space (fixed spaces are not consulted)."""
    n = len(spaces_lower)
    sl = np.empty(n)
    tl = np.empty(n)
    su = np.empty(n)
    tu = np.empty(n)
    vl = np.full(n, math.nan)
    vu = np.full(n, math.nan)
    for j, (lo_sp, up_sp) in enumerate(zip(spaces_lower, spaces_upper)):
        if lo_sp.kind == "fixed":
            low = lo_sp.fixed_line
        else:
            vl[j] = chooser(lo_sp, layer, j, target)
            low = lo_sp.line_at(vl[j])
        if up_sp.kind == "fixed":
            up = up_sp.fixed_line
        else:
            vu[j] = chooser(up_sp, layer, j, target)
            up = up_sp.line_at(vu[j])
        sl[j], tl[j] = low.slope, low.intercept
        su[j], tu[j] = up.slope, up.intercept
    return LayerLines(sl, tl, su, tu, vl, vu, spaces_lower, spaces_upper)


def layer1_bounds(net: Network, spec: PerturbationSpec):
    """Exact bounds of z(1) = W(1) x + b(1) over the ball."""
    w, b = net.weights[0], net.biases[0]
    center = w @ spec.x0 + b
    spread = spec.epsilon * dual_norm(w, spec.q)
    return center - spread, center + spread


def backward_rows(net: Network, k: int, rows, line_arrays, sense: str,
                  keep_tape: bool = False):
    """Backward pass for a batch of target rows of layer k.

    ``line_arrays[v-1]`` holds (slope_lower, intercept_lower, slope_upper,
    intercept_upper) for layer v.  Returns (coeffs g x n, offsets g, tape);
    the tape lists (v, running row matrix before unwrapping layer v), used
    for reverse-mode gradients.
    """
    if sense not in ("lower", "upper"):
        raise ValueError(f"sense must be 'lower' or 'upper', got {sense!r}")
    if len(line_arrays) < k - 1:
        raise ValueError(f"missing lines for layers below {k}")
    rows = np.atleast_1d(np.asarray(rows, dtype=int))
    A = np.array(net.weights[k - 1][rows, :])
    c = np.array(net.biases[k - 1][rows])
    tape = [] if keep_tape else None
    for v in range(k - 1, 0, -1):
        sl, tl, su, tu = line_arrays[v - 1][:4]
        if sense == "lower":
            s_pos, t_pos, s_neg, t_neg = sl, tl, su, tu
        else:
            s_pos, t_pos, s_neg, t_neg = su, tu, sl, tl
        if keep_tape:
            tape.append((v, A))
        Ap = np.maximum(A, 0.0)
        An = np.minimum(A, 0.0)
        c = c + Ap @ t_pos + An @ t_neg
        D = Ap * s_pos + An * s_neg
        c = c + D @ net.biases[v - 1]
        A = D @ net.weights[v - 1]
    return A, c, tape


def concretize_rows(coeffs: np.ndarray, offsets: np.ndarray,
                    spec: PerturbationSpec, sense: str) -> np.ndarray:
    spread = spec.epsilon * dual_norm(coeffs, spec.q)
    base = coeffs @ spec.x0 + offsets
    return base - spread if sense == "lower" else base + spread


def backward_bound(net: Network, k: int, i: int, lines: LineSet,
                   sense: str) -> AffineBound:
    """Affine bound (coeffs, offset) on z(k)_i in terms of the raw input."""
    stack = lines.lines_for(k, i)
    arrays = [ll.arrays() for ll in stack]
    A, c, _ = backward_rows(net, k, [i], arrays, sense)
    return AffineBound(A[0], float(c[0]), sense)


def concretize(bound: AffineBound, spec: PerturbationSpec) -> float:
    """Extreme value of the affine bound over the ball (the gamma scalar)."""
    if bound.coeffs.shape != (spec.x0.shape[0],):
        raise ValueError("bound coefficient length does not match the input")
    return float(concretize_rows(bound.coeffs[None, :],
                                 np.array([bound.offset]), spec,
                                 bound.sense)[0])


def with_gamma(bound: AffineBound, spec: PerturbationSpec) -> AffineBound:
    return AffineBound(bound.coeffs, bound.offset, bound.sense,
                       concretize(bound, spec))


def propagate(net: Network, spec: PerturbationSpec,
              mode: str = "self-consistent", chooser=None):
    """Bounds for every layer plus the lines that produced them.

    In self-consistent mode each layer's lines are chosen once, from that
    layer's bounds, and shared by every downstream computation.  In
    per-neuron mode the chooser runs once per target neuron, so different
    targets may use different lines in the earlier layers.
    """
    if mode not in ("self-consistent", "per-neuron"):
        raise ValueError(f"unknown mode {mode!r}")
    chooser = chooser or default_chooser
    low1, up1 = layer1_bounds(net, spec)
    lows, ups = [low1], [up1]
    act = net.activation

    if mode == "self-consistent":
        shared: list = []
        for k in range(2, net.m + 1):
            sp_lo, sp_up = relax.layer_line_spaces(act, lows[-1], ups[-1])
            shared.append(choose_layer_lines(sp_lo, sp_up, chooser, k - 1))
            arrays = [ll.arrays() for ll in shared]
            gl = concretize_rows(*backward_rows(net, k, range(net.layer_width(k)),
                                                arrays, "lower")[:2],
                                 spec, "lower")
            gu = concretize_rows(*backward_rows(net, k, range(net.layer_width(k)),
                                                arrays, "upper")[:2],
                                 spec, "upper")
            _check_order(gl, gu, k)
            lows.append(np.minimum(gl, gu))
            ups.append(np.maximum(gl, gu))
        return LayerBounds(lows, ups), LineSet("self-consistent", layers=shared)

    by_target: dict = {}
    spaces: list = []
    for k in range(2, net.m + 1):
        sp_lo, sp_up = relax.layer_line_spaces(act, lows[-1], ups[-1])
        spaces.append((sp_lo, sp_up))
        width = net.layer_width(k)
        gl = np.empty(width)
        gu = np.empty(width)
        for i in range(width):
            stack = [choose_layer_lines(*spaces[v - 1], chooser, v, target=(k, i))
                     for v in range(1, k)]
            by_target[(k, i)] = stack
            arrays = [ll.arrays() for ll in stack]
            A, c, _ = backward_rows(net, k, [i], arrays, "lower")
            gl[i] = concretize_rows(A, c, spec, "lower")[0]
            A, c, _ = backward_rows(net, k, [i], arrays, "upper")
            gu[i] = concretize_rows(A, c, spec, "upper")[0]
        _check_order(gl, gu, k)
        lows.append(np.minimum(gl, gu))
        ups.append(np.maximum(gl, gu))
    return LayerBounds(lows, ups), LineSet("per-neuron", by_target=by_target)


def _check_order(gl: np.ndarray, gu: np.ndarray, k: int) -> None:
    if np.any(gl > gu + _BOUND_ORDER_SLACK):
        raise RuntimeError(f"layer {k}: lower bound exceeds upper bound")


def margins(output_lower: np.ndarray, output_upper: np.ndarray,
            label: int) -> np.ndarray:
    """gamma_lower[label] - gamma_upper[j] for every j != label."""
    n = len(output_lower)
    if not 0 <= label < n:
        raise ValueError(f"label {label} out of range for {n} outputs")
    others = np.arange(n) != label
    return output_lower[label] - np.asarray(output_upper)[others]
