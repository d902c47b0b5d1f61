"""One-step dynamics, costs and reward of the microgrid environment.

Sign conventions used throughout the package:

* ``Action.p_ess`` is positive while an ESS is charging (it draws power),
  negative while discharging.
* Grid power ``P^N`` is positive on import and negative on export.
* The net deficit the grid has to settle is
  ``load - sum(p_dg) - pv + sum(p_ess)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import DomainError

RANDOM = "random"


@dataclass(frozen=True)
class DgUnit:
    a_cost: float
    b_cost: float
    c_cost: float
    p_min: float
    p_max: float
    ramp_up: float
    ramp_down: float

    def __post_init__(self):
        if not 0 <= self.p_min < self.p_max:
            raise DomainError(f"DG limits need 0 <= p_min < p_max, got {self.p_min}, {self.p_max}")
        if self.ramp_up <= 0 or self.ramp_down <= 0:
            raise DomainError("DG ramp limits must be positive")
        if self.a_cost < 0:
            raise DomainError("DG quadratic cost coefficient must be non-negative")


@dataclass(frozen=True)
class EssUnit:
    p_limit: float
    capacity: float
    efficiency: float
    soc_min: float = 0.2
    soc_max: float = 0.8

    def __post_init__(self):
        if not 0 <= self.soc_min < self.soc_max <= 1:
            raise DomainError(f"ESS needs 0 <= soc_min < soc_max <= 1, got {self.soc_min}, {self.soc_max}")
        if self.p_limit <= 0 or self.capacity <= 0:
            raise DomainError("ESS power limit and capacity must be positive")
        if not 0 < self.efficiency <= 1:
            raise DomainError("ESS efficiency must lie in (0, 1]")


@dataclass(frozen=True)
class SystemConfig:
    dgs: tuple[DgUnit, ...]
    esss: tuple[EssUnit, ...]
    grid_limit: float = 30.0
    sell_coeff: float = 0.5
    dt: float = 1.0
    horizon: int = 24

    def __post_init__(self):
        object.__setattr__(self, "dgs", tuple(self.dgs))
        object.__setattr__(self, "esss", tuple(self.esss))
        if self.grid_limit < 0:
            raise DomainError("grid_limit must be non-negative")
        if not 0 <= self.sell_coeff <= 1:
            raise DomainError("sell_coeff must lie in [0, 1]")
        if self.dt <= 0:
            raise DomainError("dt must be positive")
        if self.horizon < 1:
            raise DomainError("horizon must be at least one step")

    @property
    def n_dg(self) -> int:
        return len(self.dgs)

    @property
    def n_ess(self) -> int:
        return len(self.esss)

    @property
    def n_actions(self) -> int:
        return self.n_dg + self.n_ess


# Three DG units of the reference case, one 100 kW / 500 kWh ESS at 90 % efficiency.
DG_TABLE = (
    DgUnit(0.0034, 3.0, 30.0, 10.0, 150.0, 100.0, 100.0),
    DgUnit(0.001, 10.0, 40.0, 50.0, 375.0, 100.0, 100.0),
    DgUnit(0.001, 15.0, 70.0, 100.0, 500.0, 200.0, 200.0),
)
DEFAULT_ESS = EssUnit(p_limit=100.0, capacity=500.0, efficiency=0.9)


def default_system(**overrides) -> SystemConfig:
    cfg = SystemConfig(dgs=DG_TABLE, esss=(DEFAULT_ESS,), grid_limit=30.0, sell_coeff=0.5)
    return replace(cfg, **overrides) if overrides else cfg


def large_system(**overrides) -> SystemConfig:
    """Three DG units and three storage units."""
    esss = (
        EssUnit(p_limit=100.0, capacity=500.0, efficiency=0.9),
        EssUnit(p_limit=80.0, capacity=400.0, efficiency=0.9),
        EssUnit(p_limit=60.0, capacity=300.0, efficiency=0.9),
    )
    cfg = SystemConfig(dgs=DG_TABLE, esss=esss, grid_limit=30.0, sell_coeff=0.5)
    return replace(cfg, **overrides) if overrides else cfg


@dataclass(frozen=True)
class EnvState:
    t: int
    pv: float
    load: float
    price: float
    dg_prev: tuple[float, ...]
    soc: tuple[float, ...]


@dataclass(frozen=True)
class Action:
    p_dg: tuple[float, ...]
    p_ess: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "p_dg", tuple(float(v) for v in self.p_dg))
        object.__setattr__(self, "p_ess", tuple(float(v) for v in self.p_ess))
        if not all(np.isfinite(self.p_dg)) or not all(np.isfinite(self.p_ess)):
            raise DomainError("action contains non-finite values")


@dataclass(frozen=True)
class RewardParams:
    sigma1: float = 0.01
    sigma2: float = 20.0

    def __post_init__(self):
        if self.sigma1 <= 0 or self.sigma2 < 0:
            raise DomainError("reward needs sigma1 > 0 and sigma2 >= 0")


@dataclass(frozen=True)
class StepOutcome:
    next_state: EnvState
    reward: float
    operating_cost: float
    unbalance: float
    grid_power: float
    executed: Action
    done: bool
    dg_costs: tuple[float, ...] = field(default=())
    exchange_cost: float = 0.0


def dg_cost(unit: DgUnit, p: float) -> float:
    """Hourly fuel cost of a DG unit; an idle unit (p == 0) costs nothing."""
    if p < 0:
        raise DomainError(f"DG output cannot be negative, got {p}")
    if p == 0:
        return 0.0
    return unit.a_cost * p * p + unit.b_cost * p + unit.c_cost


def exchange_cost(p_grid: float, price: float, sell_coeff: float) -> float:
    if p_grid > 0:
        return price * p_grid
    if p_grid < 0:
        return sell_coeff * price * p_grid
    return 0.0


def soc_update(ess: EssUnit, soc: float, p_ess: float, dt: float) -> float:
    """State of charge after exchanging ``p_ess`` kW for ``dt`` hours.

    Charging stores ``efficiency * p * dt``; discharging removes ``p * dt / efficiency``.
    The result is clamped to ``[soc_min, soc_max]``; callers that need the power
    actually exchanged should clip with :func:`ess_power_window` first.
    """
    if abs(p_ess) > ess.p_limit * (1 + 1e-12):
        raise DomainError(f"|p_ess|={abs(p_ess)} exceeds the ESS power limit {ess.p_limit}")
    if p_ess >= 0:
        new = soc + ess.efficiency * p_ess * dt / ess.capacity
    else:
        new = soc + p_ess * dt / (ess.efficiency * ess.capacity)
    return min(max(new, ess.soc_min), ess.soc_max)


def ess_power_window(ess: EssUnit, soc: float, dt: float) -> tuple[float, float]:
    """Feasible ``(lo, hi)`` ESS power that keeps the next SOC inside its bounds."""
    charge = (ess.soc_max - soc) * ess.capacity / (ess.efficiency * dt)
    discharge = (soc - ess.soc_min) * ess.efficiency * ess.capacity / dt
    hi = min(ess.p_limit, max(charge, 0.0))
    lo = -min(ess.p_limit, max(discharge, 0.0))
    return lo, hi


def dg_power_window(unit: DgUnit, prev: float) -> tuple[float, float]:
    """Intersection of the capacity box and the ramp window around ``prev``."""
    lo = max(unit.p_min, prev - unit.ramp_down)
    hi = min(unit.p_max, prev + unit.ramp_up)
    return lo, hi


def settle_grid(net_deficit: float, grid_limit: float) -> tuple[float, float]:
    grid_power = min(max(net_deficit, -grid_limit), grid_limit)
    return grid_power, abs(net_deficit - grid_power)


def reward(total_cost: float, unbalance: float, params: RewardParams) -> float:
    if unbalance < 0:
        raise DomainError("unbalance must be non-negative")
    return -params.sigma1 * total_cost - params.sigma2 * unbalance


def net_deficit(state: EnvState, action: Action) -> float:
    return state.load - sum(action.p_dg) - state.pv + sum(action.p_ess)


def clip_action(state: EnvState, action: Action, cfg: SystemConfig) -> Action:
    p_dg = []
    for unit, prev, p in zip(cfg.dgs, state.dg_prev, action.p_dg):
        lo, hi = dg_power_window(unit, prev)
        p_dg.append(min(max(p, lo), hi))
    p_ess = []
    for ess, soc, p in zip(cfg.esss, state.soc, action.p_ess):
        lo, hi = ess_power_window(ess, soc, cfg.dt)
        p_ess.append(min(max(p, lo), hi))
    return Action(p_dg, p_ess)


def _check_dims(state: EnvState, action: Action, cfg: SystemConfig):
    if len(action.p_dg) != cfg.n_dg or len(action.p_ess) != cfg.n_ess:
        raise DomainError(
            f"action has {len(action.p_dg)} DG / {len(action.p_ess)} ESS entries, "
            f"system has {cfg.n_dg} / {cfg.n_ess}"
        )
    if len(state.dg_prev) != cfg.n_dg or len(state.soc) != cfg.n_ess:
        raise DomainError("state dimensions do not match the system configuration")


def _check_profile(profile, cfg: SystemConfig):
    if len(profile.pv) != cfg.horizon:
        raise DomainError(f"profile has {len(profile.pv)} steps, horizon is {cfg.horizon}")


def step(state: EnvState, action: Action, profile, cfg: SystemConfig,
         params: RewardParams) -> StepOutcome:
    _check_dims(state, action, cfg)
    _check_profile(profile, cfg)
    if not 0 <= state.t < cfg.horizon:
        raise DomainError(f"step index {state.t} outside horizon {cfg.horizon}")

    executed = clip_action(state, action, cfg)
    grid_power, unbalance = settle_grid(net_deficit(state, executed), cfg.grid_limit)
    dg_costs = tuple(dg_cost(u, p) * cfg.dt for u, p in zip(cfg.dgs, executed.p_dg))
    ex_cost = exchange_cost(grid_power, state.price, cfg.sell_coeff) * cfg.dt
    total = sum(dg_costs) + ex_cost

    soc = tuple(soc_update(e, s, p, cfg.dt) for e, s, p in zip(cfg.esss, state.soc, executed.p_ess))
    done = state.t == cfg.horizon - 1
    nxt = min(state.t + 1, cfg.horizon - 1)
    next_state = EnvState(
        t=state.t + 1,
        pv=float(profile.pv[nxt]),
        load=float(profile.load[nxt]),
        price=float(profile.price[nxt]),
        dg_prev=executed.p_dg,
        soc=soc,
    )
    return StepOutcome(
        next_state=next_state,
        reward=reward(total, unbalance, params),
        operating_cost=total,
        unbalance=unbalance,
        grid_power=grid_power,
        executed=executed,
        done=done,
        dg_costs=dg_costs,
        exchange_cost=ex_cost,
    )


def reset(profile, cfg: SystemConfig, init_soc: Sequence[float] | str = RANDOM,
          rng: np.random.Generator | int | None = None) -> EnvState:
    _check_profile(profile, cfg)
    if isinstance(init_soc, str):
        if init_soc != RANDOM:
            raise DomainError(f"init_soc must be a list of fractions or {RANDOM!r}")
        rng = np.random.default_rng(rng)
        soc = tuple(float(rng.uniform(e.soc_min, e.soc_max)) for e in cfg.esss)
    else:
        soc = tuple(float(s) for s in init_soc)
        if len(soc) != cfg.n_ess:
            raise DomainError(f"expected {cfg.n_ess} initial SOC values, got {len(soc)}")
        for e, s in zip(cfg.esss, soc):
            if not e.soc_min <= s <= e.soc_max:
                raise DomainError(f"initial SOC {s} outside [{e.soc_min}, {e.soc_max}]")
    return EnvState(
        t=0,
        pv=float(profile.pv[0]),
        load=float(profile.load[0]),
        price=float(profile.price[0]),
        dg_prev=tuple(u.p_min for u in cfg.dgs),
        soc=soc,
    )


class MicrogridEnv:
    """Stateful wrapper around :func:`reset` / :func:`step` for one day at a time."""

    def __init__(self, cfg: SystemConfig, params: RewardParams | None = None):
        self.cfg = cfg
        self.params = params or RewardParams()
        self.profile = None
        self.state: EnvState | None = None

    def reset(self, profile, init_soc=RANDOM, rng=None) -> EnvState:
        self.profile = profile
        self.state = reset(profile, self.cfg, init_soc, rng)
        return self.state

    def step(self, action: Action) -> StepOutcome:
        if self.state is None:
            raise DomainError("call reset() before step()")
        out = step(self.state, action, self.profile, self.cfg, self.params)
        self.state = out.next_state
        return out
