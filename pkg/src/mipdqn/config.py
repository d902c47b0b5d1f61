"""JSON run configuration: one file holds system, reward, training, data and bench settings.

Schema (every section and key optional; defaults shown)::

    {
      "system":   {"preset": "default" | "large",
                   "dgs": [{"a_cost", "b_cost", "c_cost", "p_min", "p_max", "ramp_up", "ramp_down"}, ...],
                   "esss": [{"p_limit", "capacity", "efficiency", "soc_min", "soc_max"}, ...],
                   "grid_limit": 30, "sell_coeff": 0.5, "dt": 1, "horizon": 24},
      "reward":   {"sigma1": 0.01, "sigma2": 20},
      "training": {<TrainConfig fields>, "seeds": [0]},
      "data":     {"csv": null, "synth_seed": 0, "n_days": 365},
      "bench":    {"checkpoint": null, "sigma2_sweep": [], "test_days": 30, "compare_days": 10,
                   "init_soc": "random" | [fractions], "soc_seed": 0, "k_seg": 16,
                   "backend": "highs", "time_limit": null, "strategy": "split",
                   "out": "runs"}
    }

``dgs``/``esss`` replace the preset's units when given. Relative paths are
resolved against the config file's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .microgrid import DgUnit, EssUnit, RewardParams, SystemConfig, default_system, large_system
from .training import TrainConfig

PRESETS = {"default": default_system, "large": large_system}
SECTIONS = {"system", "reward", "training", "data", "bench"}


@dataclass(frozen=True)
class DataConfig:
    csv: Path | None = None
    synth_seed: int = 0
    n_days: int = 365


@dataclass(frozen=True)
class BenchSettings:
    checkpoint: Path | None = None
    sigma2_sweep: tuple[float, ...] = ()
    test_days: int = 30
    compare_days: int = 10
    init_soc: Any = "random"
    soc_seed: int = 0
    k_seg: int = 16
    backend: str = "highs"
    time_limit: float | None = None
    strategy: str = "split"
    out: Path = Path("runs")


@dataclass(frozen=True)
class BenchConfig:
    system: SystemConfig = field(default_factory=default_system)
    reward: RewardParams = RewardParams()
    training: TrainConfig = TrainConfig()
    seeds: tuple[int, ...] = (0,)
    data: DataConfig = DataConfig()
    bench: BenchSettings = BenchSettings()


def _pick(cls, raw: dict, where: str, **extra):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be a JSON object")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known - set(extra)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**{k: v for k, v in raw.items() if k in known})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _system(raw: dict) -> SystemConfig:
    raw = dict(raw)
    preset = raw.pop("preset", "default")
    if preset not in PRESETS:
        raise ConfigError(f"system.preset must be one of {sorted(PRESETS)}, got {preset!r}")
    cfg = PRESETS[preset]()
    try:
        if "dgs" in raw:
            raw["dgs"] = tuple(_pick(DgUnit, d, f"system.dgs[{i}]") for i, d in enumerate(raw["dgs"]))
        if "esss" in raw:
            raw["esss"] = tuple(_pick(EssUnit, e, f"system.esss[{i}]") for i, e in enumerate(raw["esss"]))
        unknown = set(raw) - {f.name for f in fields(SystemConfig)}
        if unknown:
            raise ConfigError(f"system: unknown keys {sorted(unknown)}")
        return replace(cfg, **raw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"system: {exc}") from exc


def _path(value, base: Path) -> Path | None:
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else base / p


def parse_config(raw: dict, base: Path = Path(".")) -> BenchConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(raw) - SECTIONS
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    system = _system(raw.get("system", {}))
    reward = _pick(RewardParams, raw.get("reward", {}), "reward")

    tr = dict(raw.get("training", {}))
    seeds = tr.pop("seeds", None)
    training = _pick(TrainConfig, tr, "training")
    seeds = tuple(int(s) for s in (seeds if seeds is not None else [training.seed]))
    if not seeds:
        raise ConfigError("training.seeds must not be empty")

    d = dict(raw.get("data", {}))
    data = _pick(DataConfig, d, "data")
    data = replace(data, csv=_path(data.csv, base))
    if data.csv is None and data.n_days < 1:
        raise ConfigError("data.n_days must be positive")

    b = dict(raw.get("bench", {}))
    bench = _pick(BenchSettings, b, "bench")
    bench = replace(bench, checkpoint=_path(bench.checkpoint, base), out=_path(bench.out, base),
                    sigma2_sweep=tuple(float(v) for v in bench.sigma2_sweep))
    if isinstance(bench.init_soc, list):
        if len(bench.init_soc) != system.n_ess:
            raise ConfigError(f"bench.init_soc has {len(bench.init_soc)} entries, system has {system.n_ess} ESS")
        bench = replace(bench, init_soc=tuple(float(s) for s in bench.init_soc))
    elif bench.init_soc != "random":
        raise ConfigError("bench.init_soc must be 'random' or a list of fractions")
    if bench.strategy not in ("split", "monolithic"):
        raise ConfigError(f"bench.strategy must be 'split' or 'monolithic', got {bench.strategy!r}")
    if any(v < 0 for v in bench.sigma2_sweep):
        raise ConfigError("sigma2 values must be non-negative")
    return BenchConfig(system, reward, training, seeds, data, bench)


def load_config(path) -> BenchConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return parse_config(raw, path.parent)
