"""Exact maximisation of a ReLU network by splitting its input domain.

The big-M model of a wide network over a wide box has many undecided units
and a weak relaxation. When only a few inputs are free this search is much
faster: it keeps a best-first queue of sub-boxes, bounds each one with the
linear relaxation from :func:`linear_bound` (an LP over the sub-box and the
side constraints), and hands a sub-box to the MIP backend once few enough
units remain undecided there. Every leaf MIP is exact on its sub-box, so the
returned point is a global optimum up to ``tol``.
"""

from __future__ import annotations

import heapq
import time
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from ..errors import DomainError, SolverError, SolverTimeoutError
from ..neural import DenseNet, forward
from .encoder import encode_network, linear_bound, propagate_bounds
from .model import INFEASIBLE, OPTIMAL, TIME_LIMIT, SolveResult


def _knapsack(a, lo, hi, r, cap):
    """Maximise ``a @ x`` over the box subject to ``r @ x <= cap`` (fractional knapsack)."""
    x = np.where(a >= 0, hi, lo)
    excess = r @ x - cap
    if excess <= 0:
        return x
    # Moving coordinate i toward its other bound lowers r @ x by |r_i| per unit at cost |a_i|.
    down = np.where(r > 0, x - lo, hi - x) * np.abs(r)
    movable = np.flatnonzero(down > 0)
    if down[movable].sum() < excess * (1 - 1e-12):
        return None
    ratio = np.abs(a[movable]) / np.abs(r[movable])
    for i in movable[np.argsort(ratio, kind="stable")]:
        take = min(down[i], excess)
        x[i] -= np.sign(r[i]) * take / abs(r[i])
        excess -= take
        if excess <= 0:
            break
    return np.clip(x, lo, hi)


def _relaxed_max(a, c, lo, hi, rows):
    """Maximise ``a @ x + c`` over the box and rows; None when the region is empty."""
    if len(rows) == 1:
        r, r_lo, r_hi = rows[0]
        eps = 1e-9 * (1.0 + abs(r_lo) + abs(r_hi))
        x = _knapsack(a, lo, hi, r, r_hi)
        # Only re-solve from the other side on a real shortfall: with lo == hi the
        # first pass can land a rounding error below lo.
        if x is not None and r @ x < r_lo - eps:
            x = _knapsack(a, lo, hi, -r, -r_lo)
        if x is None or not r_lo - eps <= r @ x <= r_hi + eps:
            return None
        return float(a @ x + c), x
    if rows:
        a_ub, b_ub = [], []
        for coefs, r_lo, r_hi in rows:
            if np.isfinite(r_hi):
                a_ub.append(coefs)
                b_ub.append(r_hi)
            if np.isfinite(r_lo):
                a_ub.append(-coefs)
                b_ub.append(-r_lo)
        res = linprog(-a, A_ub=np.array(a_ub), b_ub=np.array(b_ub),
                      bounds=list(zip(lo, hi)), method="highs")
        if res.status == 2:
            return None
        if res.status != 0:
            raise SolverError(f"bounding LP failed: {res.message}")
        x = np.clip(res.x, lo, hi)
    else:
        x = np.where(a >= 0, hi, lo)
    return float(a @ x + c), x


def maximize_network(net: DenseNet, input_box, rows: Sequence[tuple] = (), backend=None,
                     leaf_unstable: int = 16, tol: float = 1e-7, time_limit: float | None = None,
                     output: int = 0, escalate_after: int = 1024) -> SolveResult:
    """Maximise ``net(x)[output]`` over ``input_box`` subject to ``lo <= coefs @ x <= hi`` rows.

    ``values`` of the result are the optimal network inputs. ``tol`` is
    absolute and is scaled by ``max(1, |best|)``. After ``escalate_after``
    nodes the leaf threshold doubles, and again at every further doubling of
    the node count.
    """
    from .backends import get_backend

    backend = backend or get_backend()
    t0 = time.perf_counter()
    box = np.array(input_box, dtype=float)
    if box.shape != (net.n_inputs, 2) or np.any(box[:, 0] > box[:, 1]):
        raise DomainError(f"input box must have shape ({net.n_inputs}, 2) with lb <= ub")
    rows = [(np.asarray(c, dtype=float), float(lo), float(hi)) for c, lo, hi in rows]
    free = np.flatnonzero(box[:, 1] > box[:, 0])
    width0 = np.where(box[:, 1] > box[:, 0], box[:, 1] - box[:, 0], 1.0)
    last = len(net.weights) - 1

    best_val, best_x = -np.inf, None
    counter = 0
    heap: list = []
    stats = {"nodes": 0, "leaves": 0}

    def consider(x):
        nonlocal best_val, best_x
        v = float(forward(net, x)[output])
        if v > best_val:
            best_val, best_x = v, x.copy()

    def push(lo, hi):
        nonlocal counter
        sub = np.column_stack([lo, hi])
        bounds = propagate_bounds(net, sub, "symbolic")
        stats["nodes"] += 1
        a, c = linear_bound(net, last, bounds.pre_lo, bounds.pre_hi, upper=True)
        relaxed = _relaxed_max(a[output], c[output], lo, hi, rows)
        if relaxed is None:
            return
        ub, x = relaxed
        ub = min(ub, bounds.pre_hi[last][output])
        consider(x)
        counter += 1
        heapq.heappush(heap, (-ub, counter, lo, hi, bounds))

    def solve_leaf(lo, hi, bounds):
        stats["leaves"] += 1
        model = encode_network(net, np.column_stack([lo, hi]), bounds=bounds)
        for k, (coefs, r_lo, r_hi) in enumerate(rows):
            model.add_row({v: co for v, co in zip(model.inputs, coefs)}, r_lo, r_hi, name=f"side_{k}")
        model.set_objective({model.outputs[output]: 1.0}, sense="max")
        res = backend.solve(model)
        if res.status == INFEASIBLE:
            return
        if res.values is None:
            raise SolverError(f"leaf MIP returned status {res.status} without a solution")
        consider(np.clip(res.values[model.inputs], lo, hi))
        if res.status == TIME_LIMIT:
            raise SolverTimeoutError("leaf MIP hit its time limit", result=res)

    push(box[:, 0].copy(), box[:, 1].copy())
    status = OPTIMAL
    # A nearly flat objective can keep thousands of sub-boxes within tol of the
    # incumbent. Doubling the leaf size whenever the node count doubles bounds
    # that blow-up while keeping small, cheap leaves on well-behaved problems.
    limit, budget = leaf_unstable, escalate_after
    while heap:
        neg_ub, _, lo, hi, bounds = heapq.heappop(heap)
        if -neg_ub <= best_val + tol * max(1.0, abs(best_val)):
            break
        if time_limit is not None and time.perf_counter() - t0 > time_limit:
            status = TIME_LIMIT
            break
        if stats["nodes"] >= budget:
            limit, budget = 2 * max(limit, 1), 2 * budget
        if bounds.n_unstable() <= limit or len(free) == 0:
            solve_leaf(lo, hi, bounds)
            continue
        # Split the free input with the widest relative extent.
        j = free[np.argmax((hi - lo)[free] / width0[free])]
        mid = 0.5 * (lo[j] + hi[j])
        left_hi, right_lo = hi.copy(), lo.copy()
        left_hi[j] = right_lo[j] = mid
        push(lo, left_hi)
        push(right_lo, hi)

    wall = time.perf_counter() - t0
    if best_x is None:
        return SolveResult(INFEASIBLE, wall_time=wall, message=str(stats))
    res = SolveResult(status, best_val, best_x, wall, message=str(stats))
    if status == TIME_LIMIT:
        raise SolverTimeoutError(f"domain search hit the time limit after {stats['nodes']} nodes", result=res)
    return res
