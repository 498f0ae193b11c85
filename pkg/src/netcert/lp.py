"""Layer-by-layer LP relaxation of the bounding problem.

The LP for neuron i of layer k optimizes the affine row W(k)_i a(k-1) + b(k)_i
over the input ball and the relaxed activation constraints of layers < k:
layer equalities, one or more bounding lines per neuron per side, and the
interval rows l <= z <= u.  Only p = 1 and p = inf keep the feasible set a
polyhedron; p = 2 is rejected.

Two propagation modes exist: the baseline recursively feeds each layer's LP
optima into the next layer's constraints, while shared-lines mode imports the
bounding lines and intervals of a deterministic backward-propagation run
verbatim so the LP optimum can be compared against the closed-form bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import crown, relax, simplex
from .model import Network, PerturbationSpec
from .relax import Line, LineSpace

#: slack for the primal-certificate recheck after a solve
CERT_TOL = 1e-7


class LpUnsupportedError(ValueError):
    """Requested norm or option outside the LP formulation."""


@dataclass
class LpProblem:
    """A dense LP: optimize c.v + c0 over A_eq v = b_eq, A_ub v <= b_ub."""

    sense: str
    c: np.ndarray
    c0: float
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    names: list
    meta: dict = field(default_factory=dict)

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]


@dataclass(frozen=True)
class RelaxationMenu:
    """Which bounding lines each activation contributes to the LP.

    Tags: "adaptive" (the deterministic baseline line), "chord", "slope-0",
    "slope-1" (ReLU lower lines through the origin), "tangent-left" /
    "tangent-right" (the extreme members of a tangent family).  Tags that do
    not apply to a case are skipped, so every neuron keeps at least one valid
    line per side.
    """

    relu_lower: tuple = ("slope-0", "slope-1")
    relu_upper: tuple = ("chord",)
    smooth_lower: tuple = ("chord", "tangent-left", "tangent-right")
    smooth_upper: tuple = ("chord", "tangent-left", "tangent-right")

    @classmethod
    def single(cls) -> "RelaxationMenu":
        one = ("adaptive",)
        return cls(one, one, one, one)

    @classmethod
    def multi(cls) -> "RelaxationMenu":
        return cls()

    def lines_for(self, space: LineSpace) -> list:
        if space.act == "relu":
            tags = self.relu_lower if space.side == "lower" else self.relu_upper
        else:
            tags = self.smooth_lower if space.side == "lower" else self.smooth_upper
        lines = []
        for tag in tags:
            line = _resolve_tag(space, tag)
            if line is not None:
                lines.append(line)
        if not lines:
            # a menu may name only tags that do not apply to this case;
            # fall back to the deterministic baseline line
            lines.append(_resolve_tag(space, "adaptive"))
        dedup = []
        for line in lines:
            if not any(abs(line.slope - o.slope) < 1e-15
                       and abs(line.intercept - o.intercept) < 1e-15
                       for o in dedup):
                dedup.append(line)
        for line in dedup:
            if not relax.validate_line(space.act, space.side, space.l, space.u,
                                       line, grid_size=101):
                raise RuntimeError(
                    f"menu produced an invalid {space.side} line for "
                    f"{space.act} on [{space.l}, {space.u}]")
        return dedup


def _resolve_tag(space: LineSpace, tag: str) -> Line | None:
    if tag == "adaptive":
        if space.kind == "fixed":
            return space.fixed_line
        return space.line_at(crown.default_variable(space))
    if space.kind == "fixed":
        # the unique tightest line already is the chord (or the degenerate
        # midpoint tangent); other tags do not apply
        return space.fixed_line if tag == "chord" else None
    if tag == "chord":
        return None  # the chord is not valid on this side in family cases
    if tag == "slope-0":
        return Line(0.0, 0.0) if space.generator == "relu-slope" else None
    if tag == "slope-1":
        return Line(1.0, 0.0) if space.generator == "relu-slope" else None
    if tag == "tangent-left":
        return space.line_at(space.var_lo) if space.generator == "tangent" else None
    if tag == "tangent-right":
        return space.line_at(space.var_hi) if space.generator == "tangent" else None
    raise ValueError(f"unknown relaxation tag {tag!r}")


def _layer_lines_from_menu(act, lower, upper, menu):
    """Per neuron: (list of lower Lines, list of upper Lines)."""
    out = []
    for l, u in zip(lower, upper):
        lo_sp = relax.line_space(act, "lower", float(l), float(u))
        up_sp = relax.line_space(act, "upper", float(l), float(u))
        out.append((menu.lines_for(lo_sp), menu.lines_for(up_sp)))
    return out


class _VarMap:
    """Variable layout: input x, then z(v) and a(v) per layer, then the
    absolute-value auxiliaries for the p=1 ball."""

    def __init__(self, net: Network, k: int, p: float):
        self.n = net.n
        self.offsets = {}
        pos = self.n
        for v in range(1, k):
            w = net.layer_width(v)
            self.offsets[("z", v)] = pos
            pos += w
            self.offsets[("a", v)] = pos
            pos += w
        self.r_offset = pos if p == 1.0 else None
        if p == 1.0:
            pos += self.n
        self.total = pos
        self.names = [f"x{i}" for i in range(self.n)]
        for v in range(1, k):
            self.names += [f"z{v}_{j}" for j in range(net.layer_width(v))]
            self.names += [f"a{v}_{j}" for j in range(net.layer_width(v))]
        if p == 1.0:
            self.names += [f"r{i}" for i in range(self.n)]

    def x(self, i):
        return i

    def z(self, v, j):
        return self.offsets[("z", v)] + j

    def a(self, v, j):
        return self.offsets[("a", v)] + j

    def r(self, i):
        return self.r_offset + i


def _build_with_lines(net, spec, k, i, sense, bounds, lines_per_layer):
    if spec.p not in (1.0, math.inf):
        raise LpUnsupportedError(
            "the relaxation is a linear program only for p in {1, inf}")
    if k < 2 or k > net.m:
        raise ValueError(f"layer index {k} out of range [2, {net.m}]")
    vm = _VarMap(net, k, spec.p)
    eq_rows, eq_rhs = [], []
    ub_rows, ub_rhs = [], []

    def new_row():
        return np.zeros(vm.total)

    # layer equalities z(v) = W(v) a(v-1) + b(v), with a(0) = x
    for v in range(1, k):
        w_mat, b_vec = net.weights[v - 1], net.biases[v - 1]
        for j in range(net.layer_width(v)):
            row = new_row()
            row[vm.z(v, j)] = 1.0
            for t in range(w_mat.shape[1]):
                col = vm.x(t) if v == 1 else vm.a(v - 1, t)
                row[col] = -w_mat[j, t]
            eq_rows.append(row)
            eq_rhs.append(b_vec[j])

    # bounding lines and interval rows
    for v in range(1, k):
        low_v, up_v = bounds.layer(v)
        for j in range(net.layer_width(v)):
            lo_lines, up_lines = lines_per_layer[v - 1][j]
            for line in lo_lines:       # a >= s z + t  <=>  s z - a <= -t
                row = new_row()
                row[vm.z(v, j)] = line.slope
                row[vm.a(v, j)] = -1.0
                ub_rows.append(row)
                ub_rhs.append(-line.intercept)
            for line in up_lines:       # a <= s z + t  <=>  a - s z <= t
                row = new_row()
                row[vm.a(v, j)] = 1.0
                row[vm.z(v, j)] = -line.slope
                ub_rows.append(row)
                ub_rhs.append(line.intercept)
            row = new_row()
            row[vm.z(v, j)] = 1.0
            ub_rows.append(row)
            ub_rhs.append(up_v[j])
            row = new_row()
            row[vm.z(v, j)] = -1.0
            ub_rows.append(row)
            ub_rhs.append(-low_v[j])

    # ball encoding
    if spec.p == math.inf:
        for t in range(vm.n):
            row = new_row()
            row[vm.x(t)] = 1.0
            ub_rows.append(row)
            ub_rhs.append(spec.x0[t] + spec.epsilon)
            row = new_row()
            row[vm.x(t)] = -1.0
            ub_rows.append(row)
            ub_rhs.append(-(spec.x0[t] - spec.epsilon))
    else:
        for t in range(vm.n):
            row = new_row()
            row[vm.x(t)] = 1.0
            row[vm.r(t)] = -1.0
            ub_rows.append(row)
            ub_rhs.append(spec.x0[t])
            row = new_row()
            row[vm.x(t)] = -1.0
            row[vm.r(t)] = -1.0
            ub_rows.append(row)
            ub_rhs.append(-spec.x0[t])
        row = new_row()
        for t in range(vm.n):
            row[vm.r(t)] = 1.0
        ub_rows.append(row)
        ub_rhs.append(spec.epsilon)

    # objective: row i of the layer-k affine map
    c = np.zeros(vm.total)
    w_mat = net.weights[k - 1]
    for t in range(w_mat.shape[1]):
        col = vm.x(t) if k == 1 else vm.a(k - 1, t)
        c[col] = w_mat[i, t]
    return LpProblem(
        sense="min" if sense == "lower" else "max",
        c=c,
        c0=float(net.biases[k - 1][i]),
        A_eq=np.array(eq_rows) if eq_rows else np.zeros((0, vm.total)),
        b_eq=np.array(eq_rhs),
        A_ub=np.array(ub_rows),
        b_ub=np.array(ub_rhs),
        names=vm.names,
        meta={"k": k, "i": i, "sense": sense},
    )


def build_lp(net: Network, spec: PerturbationSpec, k: int, i: int, sense: str,
             bounds: crown.LayerBounds, menu: RelaxationMenu) -> LpProblem:
    """Assemble the relaxed LP for neuron i of layer k."""
    act = net.activation
    lines_per_layer = []
    for v in range(1, k):
        low_v, up_v = bounds.layer(v)
        lines_per_layer.append(_layer_lines_from_menu(act, low_v, up_v, menu))
    return _build_with_lines(net, spec, k, i, sense, bounds, lines_per_layer)


def solve(problem: LpProblem):
    """Optimal value and primal point, with a feasibility certificate check."""
    value, point = simplex.solve_inequality_form(
        problem.c, problem.A_eq, problem.b_eq, problem.A_ub, problem.b_ub,
        sense=problem.sense)
    if problem.A_eq.shape[0]:
        eq_gap = np.abs(problem.A_eq @ point - problem.b_eq).max()
        if eq_gap > CERT_TOL:
            raise simplex.SimplexError(f"equality residual {eq_gap:.3e}")
    if problem.A_ub.shape[0]:
        ub_gap = (problem.A_ub @ point - problem.b_ub).max()
        if ub_gap > CERT_TOL:
            raise simplex.SimplexError(f"inequality violation {ub_gap:.3e}")
    re_eval = float(problem.c @ point)
    if abs(re_eval - value) > CERT_TOL * max(1.0, abs(value)):
        raise simplex.SimplexError("objective mismatch at the primal point")
    return value + problem.c0, point


def lp_propagate(net: Network, spec: PerturbationSpec,
                 menu: RelaxationMenu | None = None, mode: str = "baseline"):
    """Recursive LP bounds for layers 2..m.

    mode="shared-lines" imports lines and intermediate intervals verbatim from a
    self-consistent backward-propagation run with the baseline chooser; the
    returned LayerBounds then hold the LP optima for comparison against the
    closed-form values.
    """
    if mode not in ("baseline", "shared-lines"):
        raise ValueError(f"unknown mode {mode!r}")
    if spec.p not in (1.0, math.inf):
        raise LpUnsupportedError(
            "the relaxation is a linear program only for p in {1, inf}")
    menu = menu or RelaxationMenu.multi()

    low1, up1 = crown.layer1_bounds(net, spec)
    lows, ups = [low1], [up1]

    if mode == "shared-lines":
        ref_bounds, ref_lines = crown.propagate(net, spec)
        for k in range(2, net.m + 1):
            lines_per_layer = []
            for v in range(1, k):
                ll = ref_lines.layers[v - 1]
                per_neuron = [
                    ([Line(ll.slope_lower[j], ll.intercept_lower[j])],
                     [Line(ll.slope_upper[j], ll.intercept_upper[j])])
                    for j in range(net.layer_width(v))
                ]
                lines_per_layer.append(per_neuron)
            gl = np.empty(net.layer_width(k))
            gu = np.empty(net.layer_width(k))
            for i in range(net.layer_width(k)):
                prob = _build_with_lines(net, spec, k, i, "lower",
                                         ref_bounds, lines_per_layer)
                gl[i] = solve(prob)[0]
                prob = _build_with_lines(net, spec, k, i, "upper",
                                         ref_bounds, lines_per_layer)
                gu[i] = solve(prob)[0]
            lows.append(gl)
            ups.append(gu)
        bounds = crown.LayerBounds(lows, ups)
        return bounds, (bounds.output_lower, bounds.output_upper)

    bounds = crown.LayerBounds(lows, ups)
    for k in range(2, net.m + 1):
        gl = np.empty(net.layer_width(k))
        gu = np.empty(net.layer_width(k))
        for i in range(net.layer_width(k)):
            gl[i] = solve(build_lp(net, spec, k, i, "lower", bounds, menu))[0]
            gu[i] = solve(build_lp(net, spec, k, i, "upper", bounds, menu))[0]
        bounds.lower.append(gl)
        bounds.upper.append(gu)
    return bounds, (bounds.output_lower, bounds.output_upper)


def dump_lp(problem: LpProblem) -> str:
    """Textual listing of the LP (objective, then rows) for external checks."""
    parts = []
    meta = problem.meta
    if meta:
        parts.append(f"\\ layer {meta.get('k')} neuron {meta.get('i')} "
                     f"{meta.get('sense')}")
    parts.append(("minimize: " if problem.sense == "min" else "maximize: ")
                 + _poly(problem.c, problem.names)
                 + (f" + {problem.c0!r}" if problem.c0 else ""))
    parts.append("subject to:")
    for row, rhs in zip(problem.A_eq, problem.b_eq):
        parts.append(f"  {_poly(row, problem.names)} = {rhs!r}")
    for row, rhs in zip(problem.A_ub, problem.b_ub):
        parts.append(f"  {_poly(row, problem.names)} <= {rhs!r}")
    parts.append("free: " + " ".join(problem.names))
    return "\n".join(parts) + "\n"


def _poly(coeffs, names) -> str:
    terms = [f"{c!r} {name}" for c, name in zip(coeffs, names) if c != 0.0]
    return " + ".join(terms) if terms else "0"
