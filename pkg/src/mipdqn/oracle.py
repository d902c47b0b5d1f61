"""Perfect-forecast day schedule: the cost lower bound no online dispatcher can beat.

The quadratic DG cost is replaced inside the solver by the maximum of
``k_seg`` secant lines over ``[p_min, p_max]`` (exact at the breakpoints,
overestimating by at most ``a * h**2 / 4`` in between, ``h`` the segment
width). Grid exchange and storage power are split into non-negative parts
so both tariffs and the two-branch SOC model stay linear. The reported cost
is always recomputed from the quadratic.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dispatch import trajectory_header
from .errors import DomainError, InfeasibleError, SolverError
from .microgrid import SystemConfig, dg_cost, exchange_cost
from .mip import INFEASIBLE, OPTIMAL, MipModel, get_backend

EPS_COST = 1e-6     # tie-breaker discouraging simultaneous buy/sell and charge/discharge
OVERLAP_TOL = 1e-7


@dataclass(frozen=True)
class HorizonProblem:
    cfg: SystemConfig
    profile: object
    init_soc: tuple[float, ...]
    k_seg: int = 16
    exclusive: bool | None = None   # None: add binaries only when they turn out to be needed

    def __post_init__(self):
        object.__setattr__(self, "init_soc", tuple(float(s) for s in self.init_soc))
        if self.k_seg < 1:
            raise DomainError("k_seg must be at least 1")
        if len(self.profile.pv) != self.cfg.horizon:
            raise DomainError(f"profile has {len(self.profile.pv)} steps, horizon is {self.cfg.horizon}")
        if len(self.init_soc) != self.cfg.n_ess:
            raise DomainError(f"expected {self.cfg.n_ess} initial SOC values")
        for e, s in zip(self.cfg.esss, self.init_soc):
            if not e.soc_min <= s <= e.soc_max:
                raise DomainError(f"initial SOC {s} outside [{e.soc_min}, {e.soc_max}]")

    def segment_width(self, i: int) -> float:
        u = self.cfg.dgs[i]
        return (u.p_max - u.p_min) / self.k_seg

    def linearization_bound(self) -> float:
        """Worst-case gap between the secant cost and the quadratic over the day."""
        per_step = sum(u.a_cost * self.segment_width(i) ** 2 / 4 for i, u in enumerate(self.cfg.dgs))
        return per_step * self.cfg.horizon * self.cfg.dt


@dataclass
class HorizonSchedule:
    day: object
    p_dg: np.ndarray          # (T, n_dg)
    p_ess: np.ndarray         # (T, n_ess), positive = charging
    p_grid: np.ndarray        # (T,), positive = import
    soc: np.ndarray           # (T + 1, n_ess), soc[0] is the initial state
    dg_costs: np.ndarray      # (T, n_dg), exact quadratic, dt applied
    exchange_costs: np.ndarray
    model_cost: float         # solver objective without the epsilon tie-breaker
    wall_time: float = 0.0
    charge: np.ndarray | None = field(default=None, repr=False)
    discharge: np.ndarray | None = field(default=None, repr=False)

    @property
    def step_costs(self) -> np.ndarray:
        return self.dg_costs.sum(axis=1) + self.exchange_costs

    @property
    def total_cost(self) -> float:
        return float(self.step_costs.sum())


def _secants(unit, k_seg):
    xs = np.linspace(unit.p_min, unit.p_max, k_seg + 1)
    fs = unit.a_cost * xs ** 2 + unit.b_cost * xs + unit.c_cost
    slopes = np.diff(fs) / np.diff(xs)
    return slopes, fs[:-1] - slopes * xs[:-1]


def build_horizon_model(problem: HorizonProblem, exclusive: bool = False) -> MipModel:
    cfg, prof = problem.cfg, problem.profile
    T, dt, g = cfg.horizon, cfg.dt, cfg.grid_limit
    m = MipModel(f"oracle_{prof.day}")
    obj: dict[int, float] = {}
    v = {}
    for t in range(T):
        for i, u in enumerate(cfg.dgs):
            v["p", i, t] = m.add_var(f"p_dg{i + 1}_{t}", u.p_min, u.p_max)
            v["c", i, t] = m.add_var(f"cost_dg{i + 1}_{t}", 0.0 if u.c_cost >= 0 else -np.inf)
            obj[v["c", i, t]] = dt
        for j, e in enumerate(cfg.esss):
            v["ch", j, t] = m.add_var(f"charge{j + 1}_{t}", 0.0, e.p_limit)
            v["dis", j, t] = m.add_var(f"discharge{j + 1}_{t}", 0.0, e.p_limit)
            v["soc", j, t] = m.add_var(f"soc{j + 1}_{t + 1}", e.soc_min, e.soc_max)
            obj[v["ch", j, t]] = obj[v["dis", j, t]] = EPS_COST
        v["imp", t] = m.add_var(f"import_{t}", 0.0, g)
        v["exp", t] = m.add_var(f"export_{t}", 0.0, g)
        obj[v["imp", t]] = prof.price[t] * dt + EPS_COST
        obj[v["exp", t]] = -cfg.sell_coeff * prof.price[t] * dt + EPS_COST

    for i, u in enumerate(cfg.dgs):
        slopes, icepts = _secants(u, problem.k_seg)
        for t in range(T):
            for k, (s, c0) in enumerate(zip(slopes, icepts)):
                m.add_row({v["c", i, t]: 1.0, v["p", i, t]: -s}, lo=c0, name=f"secant_dg{i + 1}_{t}_{k}")
            prev = {v["p", i, t - 1]: -1.0} if t else {}
            base = 0.0 if t else u.p_min
            m.add_row({v["p", i, t]: 1.0, **prev}, hi=base + u.ramp_up, name=f"ramp_up_dg{i + 1}_{t}")
            m.add_row({v["p", i, t]: 1.0, **prev}, lo=base - u.ramp_down, name=f"ramp_down_dg{i + 1}_{t}")

    for t in range(T):
        row = {v["p", i, t]: 1.0 for i in range(cfg.n_dg)}
        row[v["imp", t]] = 1.0
        row[v["exp", t]] = -1.0
        for j in range(cfg.n_ess):
            row[v["ch", j, t]] = -1.0
            row[v["dis", j, t]] = 1.0
        rhs = prof.load[t] - prof.pv[t]
        m.add_row(row, rhs, rhs, name=f"balance_{t}")

    for j, e in enumerate(cfg.esss):
        for t in range(T):
            row = {v["soc", j, t]: 1.0, v["ch", j, t]: -e.efficiency * dt / e.capacity,
                   v["dis", j, t]: dt / (e.efficiency * e.capacity)}
            if t:
                row[v["soc", j, t - 1]] = -1.0
                m.add_row(row, 0.0, 0.0, name=f"soc_{j + 1}_{t}")
            else:
                s0 = problem.init_soc[j]
                m.add_row(row, s0, s0, name=f"soc_{j + 1}_{t}")

    if exclusive:
        for t in range(T):
            for j, e in enumerate(cfg.esss):
                z = m.add_var(f"is_charging{j + 1}_{t}", binary=True)
                m.add_row({v["ch", j, t]: 1.0, z: -e.p_limit}, hi=0.0, name=f"charge_on_{j + 1}_{t}")
                m.add_row({v["dis", j, t]: 1.0, z: e.p_limit}, hi=e.p_limit, name=f"discharge_on_{j + 1}_{t}")
            z = m.add_var(f"is_importing_{t}", binary=True)
            m.add_row({v["imp", t]: 1.0, z: -g}, hi=0.0, name=f"import_on_{t}")
            m.add_row({v["exp", t]: 1.0, z: g}, hi=g, name=f"export_on_{t}")

    m.set_objective(obj, sense="min")
    m.handles = v
    return m


def _diagnose(problem: HorizonProblem) -> str:
    cfg, prof = problem.cfg, problem.profile
    lo = sum(u.p_min for u in cfg.dgs) - cfg.grid_limit - sum(e.p_limit for e in cfg.esss)
    hi = sum(u.p_max for u in cfg.dgs) + cfg.grid_limit + sum(e.p_limit for e in cfg.esss)
    bad = [f"hour {t}: net load {prof.load[t] - prof.pv[t]:.1f} kW outside [{lo:.1f}, {hi:.1f}]"
           for t in range(cfg.horizon) if not lo <= prof.load[t] - prof.pv[t] <= hi]
    if bad:
        return "; ".join(bad)
    return "no single hour is out of reach; DG ramp limits and storage energy bounds conflict across hours"


def _extract(problem, model, x, wall):
    cfg, v, T = problem.cfg, model.handles, problem.cfg.horizon
    p_dg = np.array([[x[v["p", i, t]] for i in range(cfg.n_dg)] for t in range(T)]).reshape(T, cfg.n_dg)
    ch = np.array([[x[v["ch", j, t]] for j in range(cfg.n_ess)] for t in range(T)]).reshape(T, cfg.n_ess)
    dis = np.array([[x[v["dis", j, t]] for j in range(cfg.n_ess)] for t in range(T)]).reshape(T, cfg.n_ess)
    imp = np.array([x[v["imp", t]] for t in range(T)])
    exp = np.array([x[v["exp", t]] for t in range(T)])
    soc = np.vstack([np.array(problem.init_soc).reshape(1, cfg.n_ess),
                     np.array([[x[v["soc", j, t]] for j in range(cfg.n_ess)] for t in range(T)]).reshape(T, cfg.n_ess)])
    p_grid = imp - exp
    prof = problem.profile
    dg_costs = np.array([[dg_cost(u, p) * cfg.dt for u, p in zip(cfg.dgs, row)] for row in p_dg]).reshape(T, cfg.n_dg)
    ex = np.array([exchange_cost(p, prof.price[t], cfg.sell_coeff) * cfg.dt for t, p in enumerate(p_grid)])
    eps = EPS_COST * float(ch.sum() + dis.sum() + imp.sum() + exp.sum())
    return HorizonSchedule(prof.day, p_dg, ch - dis, p_grid, soc, dg_costs, ex,
                           model.evaluate(x) - eps, wall, ch, dis), np.minimum(ch, dis).max(initial=0.0), \
        float(np.minimum(imp, exp).max(initial=0.0))


def solve_horizon(problem: HorizonProblem, backend=None) -> HorizonSchedule:
    backend = backend or get_backend()
    exclusive = problem.exclusive
    if exclusive is None:
        exclusive = any(e.efficiency >= 1.0 for e in problem.cfg.esss) or problem.cfg.sell_coeff >= 1.0
    while True:
        model = build_horizon_model(problem, exclusive=exclusive)
        res = backend.solve(model)
        if res.status == INFEASIBLE:
            raise InfeasibleError(f"no feasible schedule for {problem.profile.day}: {_diagnose(problem)}",
                                  constraint="horizon")
        if res.status != OPTIMAL:
            raise SolverError(f"oracle solve ended with status {res.status}")
        sched, ess_overlap, grid_overlap = _extract(problem, model, res.values, res.wall_time)
        # Simultaneous charge/discharge or buy/sell can pay off when surplus must be
        # burnt; such a schedule has no single-power equivalent, so rule it out.
        if exclusive or problem.exclusive is False or max(ess_overlap, grid_overlap) <= OVERLAP_TOL:
            return sched
        exclusive = True


@dataclass
class ResidualReport:
    residuals: dict[str, float]
    reported_cost: float
    recomputed_cost: float

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)

    @property
    def cost_delta(self) -> float:
        return self.reported_cost - self.recomputed_cost

    def ok(self, tol: float = 1e-6) -> bool:
        return self.max_residual <= tol


def validate_schedule(schedule: HorizonSchedule, problem: HorizonProblem) -> ResidualReport:
    """Recheck balance, limits, ramps and the SOC recursion from the schedule alone.

    Residuals are in kW except ``soc_*`` entries, which are SOC fractions.
    ``reported_cost`` is the solver-side (secant) cost, ``recomputed_cost``
    the quadratic recomputation.
    """
    cfg, prof = problem.cfg, problem.profile
    T = cfg.horizon
    r: dict[str, float] = {}

    def note(key, val):
        r[key] = max(r.get(key, 0.0), float(val))

    for t in range(T):
        gen = schedule.p_dg[t].sum() + prof.pv[t] + schedule.p_grid[t] - schedule.p_ess[t].sum()
        note("balance", abs(gen - prof.load[t]))
        note("grid_limit", max(0.0, abs(schedule.p_grid[t]) - cfg.grid_limit))
        for i, u in enumerate(cfg.dgs):
            p = schedule.p_dg[t, i]
            prev = schedule.p_dg[t - 1, i] if t else u.p_min
            note("dg_box", max(0.0, u.p_min - p, p - u.p_max))
            note("dg_ramp", max(0.0, p - prev - u.ramp_up, prev - p - u.ramp_down))
        for j, e in enumerate(cfg.esss):
            p = schedule.p_ess[t, j]
            note("ess_power", max(0.0, abs(p) - e.p_limit))
            s0 = schedule.soc[t, j]
            expect = s0 + (e.efficiency * p if p >= 0 else p / e.efficiency) * cfg.dt / e.capacity
            note("soc_recursion", abs(expect - schedule.soc[t + 1, j]))
            note("soc_bounds", max(0.0, e.soc_min - schedule.soc[t + 1, j], schedule.soc[t + 1, j] - e.soc_max))
    recomputed = sum(dg_cost(u, p) * cfg.dt for row in schedule.p_dg for u, p in zip(cfg.dgs, row))
    recomputed += sum(exchange_cost(p, prof.price[t], cfg.sell_coeff) * cfg.dt
                      for t, p in enumerate(schedule.p_grid))
    return ResidualReport(r, schedule.model_cost, float(recomputed))


def write_schedule(path, schedule: HorizonSchedule, cfg: SystemConfig) -> None:
    """Same columns as a dispatch trajectory; ``q_value`` is empty and timing is zero."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trajectory_header(cfg))
        for t in range(cfg.horizon):
            w.writerow([t, *map(repr, schedule.p_dg[t].tolist()), *map(repr, schedule.p_ess[t].tolist()),
                        repr(float(schedule.p_grid[t])), *map(repr, schedule.soc[t + 1].tolist()),
                        repr(float(schedule.step_costs[t])), "0.0", "", "0"])


def cost_breakdown(schedule: HorizonSchedule, problem: HorizonProblem) -> dict:
    ex = schedule.exchange_costs
    return {
        "day": str(schedule.day),
        "total_cost": schedule.total_cost,
        "model_cost": schedule.model_cost,
        "linearization_bound": problem.linearization_bound(),
        "k_seg": problem.k_seg,
        "dg_cost": [float(c) for c in schedule.dg_costs.sum(axis=0)],
        "import_cost": float(ex[ex > 0].sum()),
        "export_revenue": float(-ex[ex < 0].sum()),
        "step_costs": [float(c) for c in schedule.step_costs],
    }


def write_breakdown(path, schedule: HorizonSchedule, problem: HorizonProblem) -> None:
    Path(path).write_text(json.dumps(cost_breakdown(schedule, problem), indent=2) + "\n", encoding="utf-8")


def solve_days(cfg: SystemConfig, days: Sequence, init_soc: Sequence[Sequence[float]],
               k_seg: int = 16, backend=None) -> list[HorizonSchedule]:
    return [solve_horizon(HorizonProblem(cfg, d, tuple(s), k_seg), backend) for d, s in zip(days, init_soc)]
