"""Benchmark pipelines behind the CLI: training sweeps, evaluation against the
perfect-forecast oracle, the unconstrained baseline, and the larger system.

Report CSVs hold only deterministic quantities; wall-clock timings go to a
separate ``timing.csv`` so identical inputs give byte-identical reports.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .config import BenchConfig
from .dispatch import (
    DayTrajectory,
    DispatchContext,
    build_dispatch_model,
    feasibility_check,
    run_day,
    run_policy_day,
    static_feasibility_warnings,
    write_trajectory,
)
from .errors import ConfigError, DomainError
from .microgrid import Action, EnvState, SystemConfig
from .mip import export_lp, get_backend
from .oracle import HorizonProblem, HorizonSchedule, solve_horizon, write_breakdown, write_schedule
from .profiles import Dataset, load_csv, split_train_test, synthesize
from .training import CurveRow, load_agent, save_agent, train, write_curves

log = logging.getLogger(__name__)

MIP_DQN = "mip-dqn"
GREEDY = "unconstrained-greedy"
ORACLE = "oracle"


# ---------------------------------------------------------------- data

def load_dataset(bc: BenchConfig) -> Dataset:
    if bc.data.csv is not None:
        if not bc.data.csv.exists():
            raise ConfigError(f"data file {bc.data.csv} not found")
        days = load_csv(bc.data.csv, bc.system.horizon)
    else:
        days = synthesize(bc.data.synth_seed, bc.data.n_days)
    return split_train_test(days)


def initial_socs(days: Sequence, cfg: SystemConfig, init_soc="random", seed: int = 0) -> list[tuple[float, ...]]:
    """Per-day starting SOC, shared by every algorithm evaluated on that day."""
    if init_soc != "random":
        return [tuple(init_soc)] * len(days)
    out = []
    for d in days:
        rng = np.random.default_rng([seed, d.day.toordinal()])
        out.append(tuple(float(rng.uniform(e.soc_min, e.soc_max)) for e in cfg.esss))
    return out


# ---------------------------------------------------------------- reports

@dataclass(frozen=True)
class RunRow:
    day: str
    algorithm: str
    cost: float               # $ over the day
    unbalance: float          # cumulative |ΔP| in kW over the day's steps
    unbalance_cost: float     # sum of price * |ΔP| * dt
    max_residual: float       # worst feasibility_check residual, kW
    solve_ms: float = 0.0     # mean per step; excluded from the deterministic CSV
    steps: int = 24


@dataclass
class Aggregate:
    algorithm: str
    n_days: int
    total_cost: float
    mean_unbalance: float
    max_residual: float
    total_time_s: float
    error_pct: float | None = None
    priced_error_pct: float | None = None


class RunReport:
    def __init__(self, rows: Sequence[RunRow] = ()):
        self.rows: list[RunRow] = list(rows)

    @property
    def algorithms(self) -> list[str]:
        return list(dict.fromkeys(r.algorithm for r in self.rows))

    def rows_for(self, algorithm: str) -> list[RunRow]:
        return [r for r in self.rows if r.algorithm == algorithm]

    def aggregate(self, algorithm: str) -> Aggregate:
        rows = self.rows_for(algorithm)
        if not rows:
            raise DomainError(f"no rows for algorithm {algorithm!r}")
        agg = Aggregate(algorithm, len(rows), sum(r.cost for r in rows),
                        sum(r.unbalance for r in rows) / len(rows),
                        max(r.max_residual for r in rows),
                        sum(r.solve_ms * r.steps for r in rows) / 1e3)
        oracle = {r.day: r.cost for r in self.rows_for(ORACLE)}
        if algorithm != ORACLE and oracle and all(r.day in oracle for r in rows):
            ref = sum(oracle[r.day] for r in rows)
            agg.error_pct = 100.0 * (agg.total_cost - ref) / ref
            agg.priced_error_pct = 100.0 * (agg.total_cost + sum(r.unbalance_cost for r in rows) - ref) / ref
        return agg

    def aggregates(self) -> list[Aggregate]:
        return [self.aggregate(a) for a in self.algorithms]


REPORT_HEADER = ("day", "algorithm", "cost_usd", "unbalance_kw", "unbalance_cost_usd", "max_residual_kw")


def write_report(out_dir, report: RunReport, timing: bool = True) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "report.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in report.rows:
            w.writerow([r.day, r.algorithm, repr(r.cost), repr(r.unbalance), repr(r.unbalance_cost),
                        repr(r.max_residual)])
    summary = []
    for a in report.aggregates():
        entry = {"algorithm": a.algorithm, "n_days": a.n_days, "total_cost": a.total_cost,
                 "mean_unbalance_kw": a.mean_unbalance, "max_residual_kw": a.max_residual}
        if a.error_pct is not None:
            entry["error_pct"] = a.error_pct
            entry["priced_error_pct"] = a.priced_error_pct
        summary.append(entry)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    if timing:
        with (out / "timing.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("day", "algorithm", "mean_solve_ms", "total_solve_s"))
            for r in report.rows:
                w.writerow([r.day, r.algorithm, f"{r.solve_ms:.3f}", f"{r.solve_ms * r.steps / 1e3:.3f}"])


def read_report(path) -> RunReport:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return RunReport([RunRow(r["day"], r["algorithm"], float(r["cost_usd"]), float(r["unbalance_kw"]),
                             float(r["unbalance_cost_usd"]), float(r["max_residual_kw"])) for r in rows])


def write_cumulative(path, report: RunReport) -> None:
    """Running totals of cost and unbalance per algorithm, day by day."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("index", "day", "algorithm", "cum_cost_usd", "cum_unbalance_kw"))
        for alg in report.algorithms:
            cost = unb = 0.0
            for i, r in enumerate(report.rows_for(alg)):
                cost += r.cost
                unb += r.unbalance
                w.writerow([i, r.day, alg, repr(cost), repr(unb)])


def trajectory_row(traj: DayTrajectory, algorithm: str, cfg: SystemConfig, profile) -> RunRow:
    residual = 0.0
    for r in traj.records:
        for v in feasibility_check(Action(r.p_dg, r.p_ess), r.state, cfg):
            residual = max(residual, v.residual)
    priced = sum(profile.price[r.t] * r.unbalance * cfg.dt for r in traj.records)
    return RunRow(str(traj.day), algorithm, traj.total_cost, traj.total_unbalance, priced, residual,
                  traj.mean_solve_ms, len(traj.records))


def schedule_row(sched: HorizonSchedule) -> RunRow:
    steps = len(sched.p_grid)
    return RunRow(str(sched.day), ORACLE, sched.total_cost, 0.0, 0.0, 0.0, 1e3 * sched.wall_time / steps, steps)


# ---------------------------------------------------------------- training

def curve_summary(runs: Sequence[Sequence[CurveRow]], confidence: float = 0.95) -> list[dict]:
    """Per-episode mean and Student-t confidence interval across seeds."""
    n = len(runs)
    length = min(len(r) for r in runs)
    out = []
    for k in range(length):
        row = {"episode": runs[0][k].episode}
        for metric in ("reward_mean", "cost_mean", "unbalance_kw"):
            vals = np.array([getattr(r[k], metric) for r in runs])
            mean = float(vals.mean())
            half = 0.0
            if n > 1:
                half = float(stats.t.ppf(0.5 + confidence / 2, n - 1) * vals.std(ddof=1) / np.sqrt(n))
            row[metric] = mean
            row[f"{metric}_lo"] = mean - half
            row[f"{metric}_hi"] = mean + half
        out.append(row)
    return out


def write_curve_summary(path, rows: list[dict]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def _fmt(v: float) -> str:
    return f"{v:g}"


def cmd_train(bc: BenchConfig, out, sigma2: Sequence[float] | None = None,
              seeds: Sequence[int] | None = None, dataset: Dataset | None = None) -> dict:
    """Train one agent per (σ₂, seed); returns ``{(sigma2, seed): checkpoint dir}``."""
    out = Path(out)
    dataset = dataset or load_dataset(bc)
    sweep = list(sigma2) if sigma2 else (list(bc.bench.sigma2_sweep) or [bc.reward.sigma2])
    seeds = list(seeds) if seeds is not None else list(bc.seeds)
    dirs = {}
    for s2 in sweep:
        params = replace(bc.reward, sigma2=s2)
        runs = []
        for seed in seeds:
            tc = replace(bc.training, seed=seed)
            result = train(bc.system, dataset.train, tc, params)
            d = out / f"sigma2_{_fmt(s2)}" / f"seed_{seed}" if len(sweep) > 1 else out / f"seed_{seed}"
            save_agent(result, d, tc, {"sigma1": params.sigma1, "sigma2": params.sigma2})
            write_curves(d / "curves.csv", result.curves)
            runs.append(result.curves)
            dirs[s2, seed] = d
            log.info("trained sigma2=%s seed=%d -> %s", s2, seed, d)
        if len(seeds) > 1:
            target = (out / f"sigma2_{_fmt(s2)}") if len(sweep) > 1 else out
            write_curve_summary(target / "curves_summary.csv", curve_summary(runs))
    return dirs


# ---------------------------------------------------------------- evaluation

def _backend(bc: BenchConfig, name: str | None = None):
    return get_backend(name or bc.bench.backend, time_limit=bc.bench.time_limit)


def evaluate_days(bc: BenchConfig, checkpoint, days: Sequence, out=None, with_greedy: bool = False,
                  with_oracle: bool = True, backend_name: str | None = None,
                  cfg: SystemConfig | None = None) -> RunReport:
    cfg = cfg or bc.system
    q, pi, fmap = load_agent(checkpoint, cfg)
    if with_greedy and pi is None:
        raise ConfigError(f"checkpoint {checkpoint} has no policy network for the greedy baseline")
    backend = _backend(bc, backend_name)
    ctx = DispatchContext(q, cfg, fmap, backend=backend, strategy=bc.bench.strategy,
                          time_limit=bc.bench.time_limit)
    socs = initial_socs(days, cfg, bc.bench.init_soc, bc.bench.soc_seed)
    out = Path(out) if out is not None else None
    if out is not None:
        (out / "trajectories").mkdir(parents=True, exist_ok=True)

    rows = {MIP_DQN: [], GREEDY: [], ORACLE: []}
    for day, soc in zip(days, socs):
        for w in static_feasibility_warnings(day, cfg):
            log.warning(w)
        traj = run_day(ctx, day, soc, bc.reward)
        rows[MIP_DQN].append(trajectory_row(traj, MIP_DQN, cfg, day))
        if out is not None:
            write_trajectory(out / "trajectories" / f"{day.day}_{MIP_DQN}.csv", traj, cfg, timing=False)
        if with_greedy:
            g = run_policy_day(pi, fmap, day, cfg, soc, bc.reward)
            rows[GREEDY].append(trajectory_row(g, GREEDY, cfg, day))
            if out is not None:
                write_trajectory(out / "trajectories" / f"{day.day}_{GREEDY}.csv", g, cfg, timing=False)
        if with_oracle:
            problem = HorizonProblem(cfg, day, soc, bc.bench.k_seg)
            sched = solve_horizon(problem, get_backend("highs") if backend_name == "enumerate" else backend)
            rows[ORACLE].append(schedule_row(sched))
            if out is not None:
                write_schedule(out / "trajectories" / f"{day.day}_{ORACLE}.csv", sched, cfg)
                write_breakdown(out / "trajectories" / f"{day.day}_{ORACLE}.json", sched, problem)
    report = RunReport(rows[MIP_DQN] + rows[GREEDY] + rows[ORACLE])
    if not with_oracle:
        log.warning("no oracle results: error column omitted")
    if out is not None:
        write_report(out, report)
        if with_greedy:
            write_cumulative(out / "cumulative.csv", report)
    return report


def _checkpoint(bc: BenchConfig, checkpoint) -> Path:
    path = Path(checkpoint) if checkpoint is not None else bc.bench.checkpoint
    if path is None:
        raise ConfigError("no checkpoint given (use --checkpoint or bench.checkpoint)")
    if not path.exists():
        raise ConfigError(f"checkpoint {path} not found")
    return path


def cmd_evaluate(bc: BenchConfig, out, checkpoint=None, n_days: int | None = None,
                 backend_name: str | None = None, oracle: bool = True) -> RunReport:
    ckpt = _checkpoint(bc, checkpoint)
    days = load_dataset(bc).test[: n_days or bc.bench.test_days]
    return evaluate_days(bc, ckpt, days, out, with_oracle=oracle, backend_name=backend_name)


def cmd_compare(bc: BenchConfig, out, checkpoint=None, n_days: int | None = None,
                backend_name: str | None = None) -> RunReport:
    ckpt = _checkpoint(bc, checkpoint)
    days = load_dataset(bc).test[: n_days or bc.bench.compare_days]
    return evaluate_days(bc, ckpt, days, out, with_greedy=True, backend_name=backend_name)


def peak_load_day(days: Sequence):
    return max(days, key=lambda d: max(l - p for l, p in zip(d.load, d.pv)))


def cmd_large_case(bc: BenchConfig, out, checkpoint=None, n_days: int | None = None,
                   backend_name: str | None = None, seed: int | None = None) -> RunReport:
    """Train (unless a checkpoint is given) and evaluate on the three-storage system.

    The evaluated days always include the test day with the highest net load.
    """
    out = Path(out)
    if bc.system.n_ess < 3:
        from .microgrid import large_system
        bc = replace(bc, system=large_system())
    dataset = load_dataset(bc)
    if checkpoint is None:
        seeds = [seed if seed is not None else bc.seeds[0]]
        dirs = cmd_train(bc, out / "train", seeds=seeds, dataset=dataset)
        checkpoint = next(iter(dirs.values()))
    days = list(dataset.test[: n_days or bc.bench.test_days])
    peak = peak_load_day(dataset.test)
    if peak not in days:
        days.append(peak)
    return evaluate_days(bc, _checkpoint(bc, checkpoint), days, out, with_greedy=True,
                         backend_name=backend_name, cfg=bc.system)


# ---------------------------------------------------------------- MIP export

def parse_state(raw: dict, cfg: SystemConfig) -> EnvState:
    required = ("pv", "load", "price", "dg_prev", "soc")
    missing = [k for k in required if k not in raw]
    if missing:
        raise DomainError(f"state is missing {missing}")
    state = EnvState(int(raw.get("t", 0)), float(raw["pv"]), float(raw["load"]), float(raw["price"]),
                     tuple(float(v) for v in raw["dg_prev"]), tuple(float(v) for v in raw["soc"]))
    if len(state.dg_prev) != cfg.n_dg or len(state.soc) != cfg.n_ess:
        raise DomainError("state dimensions do not match the system")
    if not 0 <= state.t < cfg.horizon:
        raise DomainError(f"state t={state.t} outside the horizon")
    if state.pv < 0 or state.load < 0:
        raise DomainError("pv and load must be non-negative")
    for e, s in zip(cfg.esss, state.soc):
        if not e.soc_min <= s <= e.soc_max:
            raise DomainError(f"SOC {s} outside [{e.soc_min}, {e.soc_max}]")
    for u, p in zip(cfg.dgs, state.dg_prev):
        if p != 0 and not u.p_min <= p <= u.p_max:
            raise DomainError(f"dg_prev {p} outside {{0}} U [{u.p_min}, {u.p_max}]")
    return state


def cmd_export_mip(bc: BenchConfig, state_spec, out_path, checkpoint=None) -> Path:
    """Write the max-Q model for one state as CPLEX LP plus a name-map sidecar."""
    q, _, fmap = load_agent(_checkpoint(bc, checkpoint), bc.system)
    if not isinstance(state_spec, dict):
        state_spec = json.loads(Path(state_spec).read_text(encoding="utf-8"))
    state = parse_state(state_spec, bc.system)
    ctx = DispatchContext(q, bc.system, fmap, state=state, backend=object())
    model = build_dispatch_model(ctx)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    export_lp(model, out_path)
    return out_path
