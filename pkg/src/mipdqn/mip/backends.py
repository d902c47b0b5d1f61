"""Solver backends behind a small common contract.

A backend exposes ``solve(model) -> SolveResult`` plus capability flags. Two
ship with the package:

``highs``
    HiGHS branch-and-cut through :func:`scipy.optimize.milp`.
``enumerate``
    Exhaustive depth-first search over binary assignments with an LP
    (``scipy.optimize.linprog``) at every node. Exact, and only practical
    for a handful of binaries; used as the in-repo reference.

The backend is picked by name, with the ``MIPDQN_SOLVER`` environment
variable overriding whatever a config asks for.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from ..errors import SizeError, SolverError
from .model import INFEASIBLE, OPTIMAL, TIME_LIMIT, MipModel, SolveResult

ENV_VAR = "MIPDQN_SOLVER"


def _matrix(model: MipModel):
    c, (r, col, data), lo, hi = model.arrays()
    a = sparse.csr_array((data, (r, col)), shape=(len(model.rows), model.n_vars))
    return c, a, lo, hi


@dataclass
class HighsBackend:
    time_limit: float | None = None
    mip_rel_gap: float = 1e-9
    polish: bool = True

    name = "highs"
    supports_binaries = True
    supports_indicators = False

    def _milp(self, c, a, lo, hi, lb, ub, integrality, time_limit):
        options = {"mip_rel_gap": self.mip_rel_gap, "presolve": True}
        if time_limit is not None:
            options["time_limit"] = float(time_limit)
        cons = LinearConstraint(a, lo, hi) if a.shape[0] else None
        try:
            return milp(c, integrality=integrality, bounds=Bounds(lb, ub), constraints=cons, options=options)
        except (ValueError, TypeError) as exc:
            raise SolverError(f"HiGHS rejected the model: {exc}") from exc

    def solve(self, model: MipModel) -> SolveResult:
        t0 = time.perf_counter()
        c, a, lo, hi = _matrix(model)
        sign = -1.0 if model.sense == "max" else 1.0
        lb, ub = np.array(model.lb), np.array(model.ub)
        integ = np.array(model.binary, dtype=int)
        res = self._milp(sign * c, a, lo, hi, lb, ub, integ, self.time_limit)

        if res.status == 2:
            return SolveResult(INFEASIBLE, wall_time=time.perf_counter() - t0, message=res.message)
        if res.status in (3, 4) or (res.status == 0 and res.x is None):
            raise SolverError(f"HiGHS failed (status {res.status}): {res.message}")
        status = OPTIMAL if res.status == 0 else TIME_LIMIT
        x = None if res.x is None else np.asarray(res.x, dtype=float)

        if x is not None and self.polish and integ.any():
            x = self._polish(model, x, c, a, lo, hi, lb, ub, sign) if status == OPTIMAL else x
        objective = None if x is None else model.evaluate(x)
        return SolveResult(status, objective, x, time.perf_counter() - t0, res.message)

    def _polish(self, model, x, c, a, lo, hi, lb, ub, sign):
        # Round binaries and re-solve the remaining LP so continuous values are
        # not distorted by the MIP integrality tolerance.
        lb2, ub2 = lb.copy(), ub.copy()
        for i, is_bin in enumerate(model.binary):
            if is_bin:
                lb2[i] = ub2[i] = round(x[i])
        res = self._milp(sign * c, a, lo, hi, lb2, ub2, np.zeros(model.n_vars, dtype=int), None)
        if res.status == 0 and res.x is not None:
            return np.asarray(res.x, dtype=float)
        return x


@dataclass
class EnumerationBackend:
    max_binaries: int = 20
    tol: float = 1e-9

    name = "enumerate"
    supports_binaries = True
    supports_indicators = False

    def solve(self, model: MipModel) -> SolveResult:
        bins = [i for i, b in enumerate(model.binary) if b]
        if len(bins) > self.max_binaries:
            raise SizeError(f"{len(bins)} binaries exceed the enumeration limit {self.max_binaries}")
        t0 = time.perf_counter()
        c, a, lo, hi = _matrix(model)
        sign = -1.0 if model.sense == "max" else 1.0
        a_ub, b_ub, a_eq, b_eq = _split_rows(a, lo, hi)
        lb0, ub0 = np.array(model.lb), np.array(model.ub)

        best = [None, np.inf]   # x, minimised objective

        def lp(lb, ub):
            res = linprog(sign * c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                          bounds=list(zip(_inf(lb), _inf(ub))), method="highs")
            if res.status == 2:
                return None
            if res.status != 0:
                raise SolverError(f"LP failed during enumeration: {res.message}")
            return res

        def visit(depth, lb, ub):
            res = lp(lb, ub)
            if res is None or res.fun >= best[1] - self.tol:
                return
            if depth == len(bins):
                best[0], best[1] = res.x, res.fun
                return
            i = bins[depth]
            # Try the branch the relaxation leans towards first.
            order = (1.0, 0.0) if res.x[i] >= 0.5 else (0.0, 1.0)
            for v in order:
                if not lb0[i] <= v <= ub0[i]:
                    continue
                lb2, ub2 = lb.copy(), ub.copy()
                lb2[i] = ub2[i] = v
                visit(depth + 1, lb2, ub2)

        visit(0, lb0.copy(), ub0.copy())
        wall = time.perf_counter() - t0
        if best[0] is None:
            return SolveResult(INFEASIBLE, wall_time=wall)
        x = np.asarray(best[0], dtype=float)
        return SolveResult(OPTIMAL, model.evaluate(x), x, wall)


def _inf(v):
    return [None if not np.isfinite(t) else float(t) for t in v]


def _split_rows(a, lo, hi):
    """Ranged rows -> (A_ub x <= b_ub, A_eq x == b_eq) for linprog."""
    a = a.tocsr()
    eq = np.isfinite(lo) & np.isfinite(hi) & (lo == hi)
    ub_rows, ub_rhs = [], []
    up = ~eq & np.isfinite(hi)
    dn = ~eq & np.isfinite(lo)
    if up.any():
        ub_rows.append(a[np.flatnonzero(up)])
        ub_rhs.append(hi[up])
    if dn.any():
        ub_rows.append(-a[np.flatnonzero(dn)])
        ub_rhs.append(-lo[dn])
    a_ub = sparse.vstack(ub_rows).tocsr() if ub_rows else None
    b_ub = np.concatenate(ub_rhs) if ub_rhs else None
    a_eq = a[np.flatnonzero(eq)] if eq.any() else None
    b_eq = lo[eq] if eq.any() else None
    return a_ub, b_ub, a_eq, b_eq


BACKENDS = {"highs": HighsBackend, "enumerate": EnumerationBackend}


def get_backend(name: str | None = None, **options):
    """Instantiate a backend; ``MIPDQN_SOLVER`` takes precedence over ``name``."""
    chosen = os.environ.get(ENV_VAR) or name or "highs"
    try:
        cls = BACKENDS[chosen]
    except KeyError:
        raise SolverError(f"unknown solver backend {chosen!r}; available: {sorted(BACKENDS)}") from None
    fields = cls.__dataclass_fields__
    return cls(**{k: v for k, v in options.items() if k in fields})


def solve(model: MipModel, backend=None) -> SolveResult:
    backend = backend if backend is not None else get_backend()
    return backend.solve(model)
