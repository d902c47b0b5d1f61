"""Exact optimisation of a small ReLU network by activation-pattern enumeration.

Independent of the big-M encoding: the search walks the network layer by
layer, keeping each pre-activation as an affine function of the input.
Fixing a unit on or off adds one half-space over the input; infeasible
partial patterns are pruned with an LP feasibility check, and every complete
pattern yields one LP maximising (or minimising) the now-affine output.
"""

from __future__ import annotations

import time
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from ..errors import DomainError, SizeError, SolverError
from ..neural import DenseNet
from .encoder import propagate_bounds
from .model import INFEASIBLE, OPTIMAL, SolveResult


def reference_solve(net: DenseNet, input_box, fixed_inputs: dict[int, float] | None = None,
                    extra_linear_constraints: Sequence[tuple] = (), sense: str = "max",
                    max_unstable: int = 20, output: int = 0) -> SolveResult:
    """Optimise ``net(x)[output]`` over the box, fixed inputs and extra rows.

    ``extra_linear_constraints`` holds ``(coefs, lo, hi)`` triples meaning
    ``lo <= coefs @ x <= hi`` over the network input ``x``. The returned
    ``values`` are the optimal network inputs.
    """
    t0 = time.perf_counter()
    box = np.array(input_box, dtype=float)
    for i, v in (fixed_inputs or {}).items():
        if not box[i, 0] - 1e-12 <= v <= box[i, 1] + 1e-12:
            raise DomainError(f"fixed input {i}={v} outside box {box[i]}")
        box[i] = v
    bounds = propagate_bounds(net, box)
    if bounds.n_unstable() > max_unstable:
        raise SizeError(f"{bounds.n_unstable()} undecided ReLU units exceed the limit {max_unstable}")

    n = net.n_inputs
    a_rows, b_rows = [], []           # a @ x <= b
    for coefs, lo, hi in extra_linear_constraints:
        coefs = np.asarray(coefs, dtype=float)
        if np.isfinite(hi):
            a_rows.append(coefs)
            b_rows.append(hi)
        if np.isfinite(lo):
            a_rows.append(-coefs)
            b_rows.append(-lo)
    lp_bounds = [(lo, hi) for lo, hi in box]
    sign = -1.0 if sense == "max" else 1.0
    best = {"x": None, "val": None}
    last = len(net.weights) - 1

    def feasible(a_rows, b_rows, c=None):
        res = linprog(np.zeros(n) if c is None else c,
                      A_ub=np.array(a_rows) if a_rows else None,
                      b_ub=np.array(b_rows) if b_rows else None,
                      bounds=lp_bounds, method="highs")
        if res.status == 2:
            return None
        if res.status != 0:
            raise SolverError(f"LP failed in reference search: {res.message}")
        return res

    def descend(k, j, lin_a, lin_c, post_a, post_c, a_rows, b_rows):
        # lin_*: affine pre-activation of layer k; post_*: post-activations of units < j.
        w = net.weights[k]
        if k == last:
            c_vec = lin_a[output]
            res = feasible(a_rows, b_rows, sign * c_vec)
            if res is None:
                return
            val = float(c_vec @ res.x + lin_c[output])
            if best["val"] is None or sign * val < sign * best["val"]:
                best["x"], best["val"] = res.x, val
            return
        if j == w.shape[0]:
            nxt_a = net.weights[k + 1] @ np.array(post_a).reshape(len(post_a), n)
            nxt_c = net.weights[k + 1] @ np.array(post_c) + net.biases[k + 1]
            descend(k + 1, 0, nxt_a, nxt_c, [], [], a_rows, b_rows)
            return
        lo, hi = bounds.pre_lo[k][j], bounds.pre_hi[k][j]
        row, const = lin_a[j], lin_c[j]
        if hi <= 0:
            descend(k, j + 1, lin_a, lin_c, post_a + [np.zeros(n)], post_c + [0.0], a_rows, b_rows)
            return
        if lo >= 0:
            descend(k, j + 1, lin_a, lin_c, post_a + [row], post_c + [const], a_rows, b_rows)
            return
        # on: row @ x + const >= 0
        on_a, on_b = a_rows + [-row], b_rows + [const]
        if feasible(on_a, on_b) is not None:
            descend(k, j + 1, lin_a, lin_c, post_a + [row], post_c + [const], on_a, on_b)
        off_a, off_b = a_rows + [row], b_rows + [-const]
        if feasible(off_a, off_b) is not None:
            descend(k, j + 1, lin_a, lin_c, post_a + [np.zeros(n)], post_c + [0.0], off_a, off_b)

    descend(0, 0, net.weights[0].copy(), net.biases[0].copy(), [], [], list(a_rows), list(b_rows))
    wall = time.perf_counter() - t0
    if best["x"] is None:
        return SolveResult(INFEASIBLE, wall_time=wall)
    return SolveResult(OPTIMAL, best["val"], np.asarray(best["x"]), wall)
