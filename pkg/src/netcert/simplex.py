"""Dense two-phase revised simplex with Bland's rule.

Solves  min/max c.v  subject to  A_eq v = b_eq,  A_ub v <= b_ub  with free
variables v.  Internally the problem moves to standard form (v split into
positive and negative parts, slacks added to the inequalities) and phase 1
starts from an all-artificial basis.  Bland's smallest-index rule is used
for both the entering and the leaving choice, which rules out cycling; the
basis inverse is maintained by elementary row updates and refactorized
periodically to keep drift down.
"""

from __future__ import annotations

import numpy as np

#: pivot / reduced-cost tolerance
PIVOT_TOL = 1e-9
#: phase-1 objective above this value means infeasible
FEAS_TOL = 1e-7
#: refactorize the basis inverse every this many pivots
REFACTOR_EVERY = 100


class SimplexError(RuntimeError):
    """Base class for solver failures."""


class InfeasibleError(SimplexError):
    pass


class UnboundedError(SimplexError):
    pass


class IterationLimitError(SimplexError):
    pass


def _bland_pivot(A, b, c, basis, B_inv, xB, allowed, iter_budget):
    """Run Bland-rule pivots to optimality; mutates basis/B_inv/xB in place.

    ``allowed`` masks the columns that may enter (used to lock out
    artificials in phase 2).  Returns the number of iterations spent.
    """
    m, n = A.shape
    used = 0
    since_refactor = 0
    col_idx = np.arange(n)
    while True:
        if used >= iter_budget:
            raise IterationLimitError("simplex iteration cap exceeded")
        used += 1
        lam = c[basis] @ B_inv
        reduced = c - lam @ A
        reduced[basis] = 0.0
        candidates = col_idx[(reduced < -PIVOT_TOL) & allowed]
        if candidates.size == 0:
            return used
        enter = int(candidates[0])  # Bland: smallest index
        d = B_inv @ A[:, enter]
        pos = d > PIVOT_TOL
        if not pos.any():
            raise UnboundedError("unbounded direction encountered")
        ratios = np.full(m, np.inf)
        ratios[pos] = xB[pos] / d[pos]
        theta = ratios.min()
        ties = np.flatnonzero(ratios <= theta + 1e-12)
        # Bland tie-break: leave the variable with the smallest index
        leave_row = int(ties[np.argmin(np.asarray(basis)[ties])])
        piv = d[leave_row]
        xB -= theta * d
        xB[leave_row] = theta
        np.maximum(xB, 0.0, out=xB)
        B_inv[leave_row, :] /= piv
        others = np.arange(m) != leave_row
        B_inv[others, :] -= np.outer(d[others], B_inv[leave_row, :])
        basis[leave_row] = enter
        since_refactor += 1
        if since_refactor >= REFACTOR_EVERY:
            since_refactor = 0
            B_inv[:, :] = np.linalg.inv(A[:, basis])
            xB[:] = np.maximum(B_inv @ b, 0.0)


def solve_inequality_form(c, A_eq, b_eq, A_ub, b_ub, sense="min",
                          max_iter=10**6):
    """Solve the LP over free variables; returns (optimal value, v)."""
    c = np.asarray(c, dtype=float)
    nv = c.shape[0]
    A_eq = np.zeros((0, nv)) if A_eq is None else np.asarray(A_eq, dtype=float)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    A_ub = np.zeros((0, nv)) if A_ub is None else np.asarray(A_ub, dtype=float)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    if sense not in ("min", "max"):
        raise ValueError(f"sense must be 'min' or 'max', got {sense!r}")
    obj = c if sense == "min" else -c

    n_eq, n_ub = A_eq.shape[0], A_ub.shape[0]
    m = n_eq + n_ub
    # standard form: y = [v+, v-, slacks]; rows [A_eq; A_ub]
    A = np.zeros((m, 2 * nv + n_ub))
    A[:n_eq, :nv] = A_eq
    A[:n_eq, nv:2 * nv] = -A_eq
    A[n_eq:, :nv] = A_ub
    A[n_eq:, nv:2 * nv] = -A_ub
    A[n_eq:, 2 * nv:] = np.eye(n_ub)
    b = np.concatenate([b_eq, b_ub])
    flip = b < 0
    A[flip, :] *= -1.0
    b = np.abs(b)

    n_std = A.shape[1]
    full = np.hstack([A, np.eye(m)])
    cost1 = np.concatenate([np.zeros(n_std), np.ones(m)])
    basis = list(range(n_std, n_std + m))
    B_inv = np.eye(m)
    xB = b.copy()
    allowed = np.ones(n_std + m, dtype=bool)

    used = _bland_pivot(full, b, cost1, basis, B_inv, xB, allowed, max_iter)
    phase1_val = float(cost1[basis] @ xB)
    if phase1_val > FEAS_TOL:
        raise InfeasibleError(f"phase-1 objective {phase1_val:.3e}")

    # drive leftover artificials out of the basis where a real pivot exists;
    # rows with no real pivot are redundant and the artificial stays inert
    for row in range(m):
        if basis[row] < n_std:
            continue
        tableau_row = B_inv[row, :] @ full[:, :n_std]
        cands = np.flatnonzero(np.abs(tableau_row) > 1e-7)
        if cands.size == 0:
            continue
        enter = int(cands[0])
        piv = tableau_row[enter]
        d = B_inv @ full[:, enter]
        B_inv[row, :] /= piv
        others = np.arange(m) != row
        B_inv[others, :] -= np.outer(d[others], B_inv[row, :])
        basis[row] = enter
        xB = np.maximum(B_inv @ b, 0.0)

    cost2 = np.zeros(n_std + m)
    cost2[:nv] = obj
    cost2[nv:2 * nv] = -obj
    allowed[n_std:] = False  # artificials may never re-enter
    _bland_pivot(full, b, cost2, basis, B_inv, xB, allowed,
                 max_iter - used)

    y = np.zeros(n_std + m)
    y[np.asarray(basis)] = xB
    v = y[:nv] - y[nv:2 * nv]
    value = float(obj @ v)
    if sense == "max":
        value = -value
    return value, v
