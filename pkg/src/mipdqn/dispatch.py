"""Online execution: pick each hour's action by maximising the frozen Q-network
subject to the operational constraints, so the schedule is feasible by
construction.

Constraints are written in the network's normalised action coordinates by
pushing the affine map ``p = offset + scale * a`` through each physical row.
"""

from __future__ import annotations

import csv
import string
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError, InfeasibleError, SolverTimeoutError
from .microgrid import (
    Action,
    EnvState,
    RewardParams,
    SystemConfig,
    dg_power_window,
    ess_power_window,
    net_deficit,
    reset,
    step,
)
from .mip import (
    INFEASIBLE,
    TIME_LIMIT,
    MipModel,
    encode_network,
    get_backend,
    maximize_network,
    set_objective_max_output,
)
from .neural import DenseNet, forward
from .training import FeatureMap, action_scales, denormalize_action, policy_action

FEAS_TOL = 1e-6
# "monolithic" solves one big-M model over the whole action box; "split"
# branches on the action box and only hands small sub-boxes to the backend.
STRATEGIES = ("split", "monolithic")


@dataclass
class ActionConstraints:
    """Linear constraint set over normalised actions plus the grid power ``P^N``."""

    a_lo: np.ndarray
    a_hi: np.ndarray
    balance_coefs: np.ndarray      # sum(balance_coefs * a) + P^N == balance_rhs
    balance_rhs: float
    grid_limit: float
    labels_lo: list[str]
    labels_hi: list[str]

    def balance_row(self) -> tuple[np.ndarray, float, float]:
        """Balance with ``P^N`` eliminated: ``rhs - g <= coefs @ a <= rhs + g``."""
        return self.balance_coefs, self.balance_rhs - self.grid_limit, self.balance_rhs + self.grid_limit


def build_constraints(state: EnvState, cfg: SystemConfig) -> ActionConstraints:
    if len(state.dg_prev) != cfg.n_dg or len(state.soc) != cfg.n_ess:
        raise DomainError("state does not match the system configuration")
    offset, scale = action_scales(cfg)
    p_lo, p_hi, labels_lo, labels_hi = [], [], [], []
    for i, (unit, prev) in enumerate(zip(cfg.dgs, state.dg_prev), start=1):
        lo, hi = dg_power_window(unit, prev)
        p_lo.append(lo)
        p_hi.append(hi)
        labels_lo.append(f"dg{i}_ramp_down" if lo > unit.p_min else f"dg{i}_p_min")
        labels_hi.append(f"dg{i}_ramp_up" if hi < unit.p_max else f"dg{i}_p_max")
        if lo > hi:
            raise InfeasibleError(f"DG {i}: ramp window [{lo}, {hi}] is empty", constraint=f"dg{i}_ramp")
    for j, (ess, soc) in enumerate(zip(cfg.esss, state.soc), start=1):
        lo, hi = ess_power_window(ess, soc, cfg.dt)
        p_lo.append(lo)
        p_hi.append(hi)
        labels_lo.append(f"ess{j}_soc_min" if lo > -ess.p_limit else f"ess{j}_discharge_limit")
        labels_hi.append(f"ess{j}_soc_max" if hi < ess.p_limit else f"ess{j}_charge_limit")
    a_lo = (np.array(p_lo) - offset) / scale
    a_hi = (np.array(p_hi) - offset) / scale

    sign = np.concatenate([np.ones(cfg.n_dg), -np.ones(cfg.n_ess)])
    coefs = sign * scale
    rhs = state.load - state.pv - float(np.sum(sign * offset))
    cons = ActionConstraints(a_lo, a_hi, coefs, rhs, cfg.grid_limit, labels_lo, labels_hi)

    reach_lo = float(np.sum(np.minimum(coefs * a_lo, coefs * a_hi)))
    reach_hi = float(np.sum(np.maximum(coefs * a_lo, coefs * a_hi)))
    if reach_hi < rhs - cfg.grid_limit - FEAS_TOL:
        raise InfeasibleError(
            f"power balance unreachable: generation falls {rhs - cfg.grid_limit - reach_hi:.3f} kW short",
            constraint="balance")
    if reach_lo > rhs + cfg.grid_limit + FEAS_TOL:
        raise InfeasibleError(
            f"power balance unreachable: {reach_lo - rhs - cfg.grid_limit:.3f} kW surplus cannot be absorbed",
            constraint="balance")
    return cons


@dataclass
class DispatchContext:
    q_net: DenseNet
    cfg: SystemConfig
    features: FeatureMap
    state: EnvState | None = None
    backend: object = None
    reproducible: bool = False
    strategy: str = "split"
    leaf_unstable: int = 6
    time_limit: float | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise DomainError(f"unknown dispatch strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.q_net.n_inputs != self.features.size + self.cfg.n_actions:
            raise DomainError(
                f"Q-network takes {self.q_net.n_inputs} inputs, features+actions give "
                f"{self.features.size + self.cfg.n_actions}")
        if self.backend is None:
            self.backend = get_backend()


@dataclass
class DispatchResult:
    action: Action
    a_norm: np.ndarray
    grid_power: float
    predicted_q: float
    status: str
    wall_time: float
    binding: list[str] = field(default_factory=list)


def build_dispatch_model(ctx: DispatchContext, cons: ActionConstraints | None = None) -> MipModel:
    """Max-Q MIP for the current state: state inputs pinned, actions boxed, balance row added."""
    state = ctx.state
    cons = cons or build_constraints(state, ctx.cfg)
    s = ctx.features.featurize(state)
    box = np.vstack([np.column_stack([s, s]), np.column_stack([cons.a_lo, cons.a_hi])])
    names = [f"state_{i}" for i in range(len(s))] + [f"action_{i}" for i in range(ctx.cfg.n_actions)]
    model = set_objective_max_output(encode_network(ctx.q_net, box, input_names=names))
    model.name = f"dispatch_t{state.t}"
    p_grid = model.add_var("p_grid", -cons.grid_limit, cons.grid_limit, kind="aux")
    act = model.inputs[len(s):]
    row = {v: c for v, c in zip(act, cons.balance_coefs)}
    row[p_grid] = 1.0
    model.add_row(row, cons.balance_rhs, cons.balance_rhs, name="balance")
    model.action_vars = act
    model.grid_var = p_grid
    return model


def _lexicographic(ctx, model, x, objective):
    # Among (near-)optimal solutions keep the lexicographically smallest action.
    m = model.copy()
    m.add_row({m.outputs[0]: 1.0}, lo=objective - 1e-7 * (1 + abs(objective)), name="q_floor")
    for v in model.action_vars:
        m.set_objective({v: 1.0}, sense="min")
        res = ctx.backend.solve(m)
        if res.values is None:
            break
        x = res.values
        m.ub[v] = min(m.ub[v], x[v] + 1e-9)
    return x


def _check_status(res, t):
    if res.status == INFEASIBLE:
        raise InfeasibleError(f"dispatch MIP infeasible at t={t}", step=t)
    if res.status == TIME_LIMIT:
        raise SolverTimeoutError(f"dispatch MIP hit the time limit at t={t}", result=res)


def dispatch_step(ctx: DispatchContext) -> DispatchResult:
    """Maximise Q over the feasible actions of ``ctx.state`` and return the physical action."""
    t0 = time.perf_counter()
    cons = build_constraints(ctx.state, ctx.cfg)
    s = ctx.features.featurize(ctx.state)
    if ctx.strategy == "monolithic" or ctx.reproducible:
        model = build_dispatch_model(ctx, cons)
        if ctx.time_limit is not None and hasattr(ctx.backend, "time_limit"):
            ctx.backend.time_limit = ctx.time_limit
        res = ctx.backend.solve(model)
        _check_status(res, ctx.state.t)
        x = res.values
        if ctx.reproducible:
            x = _lexicographic(ctx, model, x, res.objective)
        a = x[model.action_vars]
    else:
        box = np.vstack([np.column_stack([s, s]), np.column_stack([cons.a_lo, cons.a_hi])])
        coefs, lo, hi = cons.balance_row()
        row = (np.concatenate([np.zeros(len(s)), coefs]), lo, hi)
        res = maximize_network(ctx.q_net, box, [row], backend=ctx.backend,
                               leaf_unstable=ctx.leaf_unstable, time_limit=ctx.time_limit)
        _check_status(res, ctx.state.t)
        a = res.values[len(s):]

    a = np.clip(a, cons.a_lo, cons.a_hi)
    action = denormalize_action(a, ctx.cfg)
    deficit = net_deficit(ctx.state, action)
    grid = float(np.clip(deficit, -cons.grid_limit, cons.grid_limit))
    q = float(forward(ctx.q_net, np.concatenate([s, a]))[0])

    binding = []
    span = np.maximum(cons.a_hi - cons.a_lo, 1e-12)
    for i in range(len(a)):
        if (a[i] - cons.a_lo[i]) / span[i] < 1e-7:
            binding.append(cons.labels_lo[i])
        elif (cons.a_hi[i] - a[i]) / span[i] < 1e-7:
            binding.append(cons.labels_hi[i])
    if abs(abs(grid) - cons.grid_limit) < 1e-7:
        binding.append("grid_import_limit" if grid > 0 else "grid_export_limit")
    return DispatchResult(action, a, grid, q, res.status, time.perf_counter() - t0, binding)


@dataclass
class StepRecord:
    t: int
    p_dg: tuple[float, ...]
    p_ess: tuple[float, ...]
    grid_power: float
    soc: tuple[float, ...]
    cost: float
    unbalance: float
    q_value: float = float("nan")
    solve_ms: float = 0.0
    state: EnvState | None = None


@dataclass
class DayTrajectory:
    day: object
    records: list[StepRecord]

    @property
    def total_cost(self) -> float:
        return float(sum(r.cost for r in self.records))

    @property
    def total_unbalance(self) -> float:
        return float(sum(r.unbalance for r in self.records))

    @property
    def max_unbalance(self) -> float:
        return max(r.unbalance for r in self.records)

    @property
    def mean_solve_ms(self) -> float:
        return float(np.mean([r.solve_ms for r in self.records]))


def run_day(ctx: DispatchContext, profile, init_soc: Sequence[float],
            params: RewardParams = RewardParams()) -> DayTrajectory:
    cfg = ctx.cfg
    state = reset(profile, cfg, init_soc)
    records = []
    for t in range(cfg.horizon):
        ctx.state = state
        try:
            res = dispatch_step(ctx)
        except InfeasibleError as exc:
            exc.step = t
            raise
        out = step(state, res.action, profile, cfg, params)
        records.append(StepRecord(t, out.executed.p_dg, out.executed.p_ess, out.grid_power,
                                  out.next_state.soc, out.operating_cost, out.unbalance,
                                  res.predicted_q, 1e3 * res.wall_time, state))
        state = out.next_state
    return DayTrajectory(profile.day, records)


def run_policy_day(policy_net: DenseNet, features: FeatureMap, profile, cfg: SystemConfig,
                   init_soc: Sequence[float], params: RewardParams = RewardParams()) -> DayTrajectory:
    """Execute the exploration policy directly; only the environment's clipping applies."""
    state = reset(profile, cfg, init_soc)
    records = []
    for t in range(cfg.horizon):
        t0 = time.perf_counter()
        a = policy_action(policy_net, features.featurize(state))
        ms = 1e3 * (time.perf_counter() - t0)
        out = step(state, denormalize_action(a, cfg), profile, cfg, params)
        records.append(StepRecord(t, out.executed.p_dg, out.executed.p_ess, out.grid_power,
                                  out.next_state.soc, out.operating_cost, out.unbalance,
                                  solve_ms=ms, state=state))
        state = out.next_state
    return DayTrajectory(profile.day, records)


@dataclass(frozen=True)
class Violation:
    constraint: str
    unit: int | None
    residual: float


def feasibility_check(action: Action, state: EnvState, cfg: SystemConfig,
                      tol: float = FEAS_TOL) -> list[Violation]:
    """Audit an action against balance, DG, ramp, ESS and grid limits.

    Residuals are in kW; SOC overshoot is converted to the kW that caused it.
    The grid absorbs whatever it can within its limit, so the balance residual
    is the part of the net deficit beyond ``grid_limit``.
    """
    out = []
    deficit = net_deficit(state, action)
    excess = abs(deficit) - cfg.grid_limit
    if excess > tol:
        out.append(Violation("balance", None, excess))
    for i, (u, prev, p) in enumerate(zip(cfg.dgs, state.dg_prev, action.p_dg)):
        checks = (("dg_p_min", u.p_min - p), ("dg_p_max", p - u.p_max),
                  ("dg_ramp_up", p - prev - u.ramp_up), ("dg_ramp_down", prev - p - u.ramp_down))
        out += [Violation(name, i, r) for name, r in checks if r > tol]
    for j, (e, soc, p) in enumerate(zip(cfg.esss, state.soc, action.p_ess)):
        if abs(p) - e.p_limit > tol:
            out.append(Violation("ess_power", j, abs(p) - e.p_limit))
        if p >= 0:
            over = (soc + e.efficiency * p * cfg.dt / e.capacity - e.soc_max) * e.capacity / (e.efficiency * cfg.dt)
            if over > tol:
                out.append(Violation("ess_soc_max", j, over))
        else:
            under = (e.soc_min - soc - p * cfg.dt / (e.efficiency * e.capacity)) * e.efficiency * e.capacity / cfg.dt
            if under > tol:
                out.append(Violation("ess_soc_min", j, under))
    return out


def static_feasibility_warnings(profile, cfg: SystemConfig) -> list[str]:
    """Hours whose net load lies outside what DGs, storage and grid could ever cover."""
    lo = sum(u.p_min for u in cfg.dgs) - cfg.grid_limit - sum(e.p_limit for e in cfg.esss)
    hi = sum(u.p_max for u in cfg.dgs) + cfg.grid_limit + sum(e.p_limit for e in cfg.esss)
    warnings = []
    for h, (load, pv) in enumerate(zip(profile.load, profile.pv)):
        net = load - pv
        if not lo <= net <= hi:
            warnings.append(f"{profile.day} hour {h}: net load {net:.1f} kW outside [{lo:.1f}, {hi:.1f}]")
    return warnings


def _ess_tags(n):
    return list(string.ascii_uppercase[:n]) if n <= 26 else [str(j + 1) for j in range(n)]


def trajectory_header(cfg: SystemConfig) -> list[str]:
    tags = _ess_tags(cfg.n_ess)
    return (["t"] + [f"p_dg{i + 1}" for i in range(cfg.n_dg)] + [f"p_ess{c}" for c in tags]
            + ["p_grid_kw"] + [f"soc_{c}" for c in tags]
            + ["cost_usd", "unbalance_kw", "q_value", "solve_ms"])


def write_trajectory(path, traj: DayTrajectory, cfg: SystemConfig, timing: bool = True) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trajectory_header(cfg))
        for r in traj.records:
            w.writerow([r.t, *map(repr, r.p_dg), *map(repr, r.p_ess), repr(r.grid_power),
                        *map(repr, r.soc), repr(r.cost), repr(r.unbalance), repr(r.q_value),
                        f"{r.solve_ms:.3f}" if timing else "0"])
