"""Joint training of the Q-network, its target copy and the exploration policy."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import neural
from .errors import CheckpointError, DomainError, TrainingDivergedError, ValidationError
from .microgrid import Action, EnvState, MicrogridEnv, RewardParams, SystemConfig
from .neural import AdamState, DenseNet, adam_step, gradients, soft_update

log = logging.getLogger(__name__)

CURVE_HEADER = ("episode", "reward_mean", "cost_mean", "unbalance_kw")


@dataclass(frozen=True)
class FeatureMap:
    """Min-max scaling of the observed state into [0, 1] features.

    Default features are ``[pv, load, dg_prev..., soc...]``; ``include_time``
    appends hour-of-day and price.
    """

    cfg: SystemConfig
    pv_max: float = 250.0
    load_max: float = 500.0
    price_max: float = 20.0
    include_time: bool = False

    @property
    def size(self) -> int:
        return 2 + self.cfg.n_dg + self.cfg.n_ess + (2 if self.include_time else 0)

    def _ranges(self):
        lo = [0.0, 0.0] + [u.p_min for u in self.cfg.dgs] + [e.soc_min for e in self.cfg.esss]
        hi = [self.pv_max, self.load_max] + [u.p_max for u in self.cfg.dgs] + [e.soc_max for e in self.cfg.esss]
        if self.include_time:
            lo += [0.0, 0.0]
            hi += [float(self.cfg.horizon - 1) or 1.0, self.price_max]
        return np.array(lo), np.array(hi)

    def featurize(self, state: EnvState) -> np.ndarray:
        raw = [state.pv, state.load, *state.dg_prev, *state.soc]
        if self.include_time:
            raw += [state.t, state.price]
        lo, hi = self._ranges()
        return (np.array(raw, dtype=float) - lo) / (hi - lo)

    def inverse(self, features, t: int = 0, price: float = 0.0) -> EnvState:
        lo, hi = self._ranges()
        raw = lo + np.asarray(features, dtype=float) * (hi - lo)
        nd, ne = self.cfg.n_dg, self.cfg.n_ess
        if self.include_time:
            t, price = int(round(raw[-2])), float(raw[-1])
        return EnvState(t=t, pv=float(raw[0]), load=float(raw[1]), price=price,
                        dg_prev=tuple(float(v) for v in raw[2:2 + nd]),
                        soc=tuple(float(v) for v in raw[2 + nd:2 + nd + ne]))

    def to_dict(self) -> dict:
        return {"pv_max": self.pv_max, "load_max": self.load_max,
                "price_max": self.price_max, "include_time": self.include_time}


def featurize(state: EnvState, fmap: FeatureMap) -> np.ndarray:
    return fmap.featurize(state)


def action_scales(cfg: SystemConfig) -> tuple[np.ndarray, np.ndarray]:
    """Affine map ``physical = offset + scale * a_norm`` per action component."""
    offset = [0.5 * (u.p_min + u.p_max) for u in cfg.dgs] + [0.0] * cfg.n_ess
    scale = [0.5 * (u.p_max - u.p_min) for u in cfg.dgs] + [e.p_limit for e in cfg.esss]
    return np.array(offset), np.array(scale)


def denormalize_action(a_norm, cfg: SystemConfig) -> Action:
    offset, scale = action_scales(cfg)
    p = offset + scale * np.asarray(a_norm, dtype=float)
    return Action(p[:cfg.n_dg], p[cfg.n_dg:])


def normalize_action(action: Action, cfg: SystemConfig) -> np.ndarray:
    offset, scale = action_scales(cfg)
    return (np.array(action.p_dg + action.p_ess) - offset) / scale


def policy_action(policy_net: DenseNet, features) -> np.ndarray:
    return np.tanh(policy_net(features))


def explore_action(policy_net: DenseNet, features, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if sigma < 0:
        raise DomainError("exploration sigma must be non-negative")
    a = policy_action(policy_net, features)
    if sigma > 0:
        a = a + rng.normal(0.0, sigma, size=a.shape)
    return np.clip(a, -1.0, 1.0)


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool


class ReplayBuffer:
    """Fixed-capacity ring buffer; the oldest transition is overwritten first."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise DomainError("buffer capacity must be positive")
        self.capacity = capacity
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros((capacity, action_dim))
        self.r = np.zeros(capacity)
        self.s_next = np.zeros((capacity, state_dim))
        self.done = np.zeros(capacity)
        self._next = 0
        self._size = 0

    def __len__(self):
        return self._size

    def add(self, tr: Transition):
        i = self._next
        self.s[i], self.a[i], self.r[i], self.s_next[i], self.done[i] = tr.s, tr.a, tr.r, tr.s_next, tr.done
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict:
        if batch_size > self._size:
            raise DomainError(f"cannot sample {batch_size} from {self._size} transitions")
        idx = rng.choice(self._size, size=batch_size, replace=False)
        return {"s": self.s[idx], "a": self.a[idx], "r": self.r[idx],
                "s_next": self.s_next[idx], "done": self.done[idx]}


@dataclass
class AgentBundle:
    q_net: DenseNet
    q_target: DenseNet
    policy_net: DenseNet
    q_opt: AdamState
    policy_opt: AdamState

    @classmethod
    def create(cls, state_dim: int, action_dim: int, hidden: Sequence[int] = (64, 64, 64),
               lr: float = 1e-4, rng=None) -> "AgentBundle":
        rng = np.random.default_rng(rng)
        q = DenseNet.init([state_dim + action_dim, *hidden, 1], rng)
        pi = DenseNet.init([state_dim, *hidden, action_dim], rng)
        return cls(q, q.copy(), pi,
                   AdamState.for_params(q.params(), lr=lr),
                   AdamState.for_params(pi.params(), lr=lr))


def q_update(bundle: AgentBundle, batch: dict, gamma: float) -> float:
    """One Adam step on the mean squared Bellman error; returns the pre-step loss.

    The bootstrap action for ``s_next`` comes from the policy network, which
    stands in for the intractable arg-max over continuous actions.
    """
    s, a, r, s2, done = batch["s"], batch["a"], batch["r"], batch["s_next"], batch["done"]
    if len(r) == 0:
        raise DomainError("empty batch")
    a2 = policy_action(bundle.policy_net, s2)
    q_next = bundle.q_target(np.hstack([s2, a2]))[:, 0]
    y = r + gamma * (1.0 - done) * q_next
    sa = np.hstack([s, a])
    err = y - bundle.q_net(sa)[:, 0]
    loss = float(np.mean(err ** 2))
    g = gradients(bundle.q_net, sa, (-2.0 / len(r)) * err[:, None])
    adam_step(bundle.q_opt, bundle.q_net.params(), g.params())
    return loss


def policy_update(bundle: AgentBundle, batch: dict) -> float:
    """One ascent step on mean Q(s, pi(s)) with the Q-network held fixed."""
    s = batch["s"]
    n = len(s)
    if n == 0:
        raise DomainError("empty batch")
    raw = bundle.policy_net(s)
    a = np.tanh(raw)
    sa = np.hstack([s, a])
    objective = float(np.mean(bundle.q_net(sa)))
    dq = gradients(bundle.q_net, sa, np.full((n, 1), 1.0 / n)).inputs[:, s.shape[1]:]
    g = gradients(bundle.policy_net, s, -dq * (1.0 - a * a))
    adam_step(bundle.policy_opt, bundle.policy_net.params(), g.params())
    return objective


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    episode_length: int = 24
    batch_size: int = 256
    lr: float = 1e-4
    gamma: float = 0.995
    tau: float = 0.005
    sigma_start: float = 0.3
    sigma_end: float = 0.01
    buffer_capacity: int = 50_000
    hidden: tuple[int, ...] = (64, 64, 64)
    update_mode: str = "per_step"
    updates_per_epoch: int = 1
    reward_scale: float = 1e-3
    seed: int = 0
    include_time: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(self.hidden))
        if not 0 < self.gamma < 1:
            raise ValidationError("gamma must lie in (0, 1)")
        if self.batch_size > self.buffer_capacity:
            raise ValidationError("batch size exceeds buffer capacity")
        if self.update_mode not in ("per_epoch", "per_step"):
            raise ValidationError(f"unknown update_mode {self.update_mode!r}")
        if self.epochs < 1 or self.episode_length < 1:
            raise ValidationError("epochs and episode_length must be positive")

    def sigma(self, epoch: int) -> float:
        """Linear decay from sigma_start to sigma_end over the first half of training."""
        half = max(1, self.epochs // 2)
        frac = min(epoch / half, 1.0)
        return self.sigma_start + frac * (self.sigma_end - self.sigma_start)


@dataclass
class CurveRow:
    episode: int
    reward_mean: float
    cost_mean: float
    unbalance_kw: float


@dataclass
class TrainResult:
    bundle: AgentBundle
    features: FeatureMap
    curves: list[CurveRow] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)


def config_hash(*parts) -> str:
    blob = json.dumps([_jsonable(p) for p in parts], sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _jsonable(obj):
    try:
        return asdict(obj)
    except TypeError:
        return obj


def _update(bundle, buffer, tc, rng, losses):
    if len(buffer) < tc.batch_size:
        return
    batch = buffer.sample(tc.batch_size, rng)
    loss = q_update(bundle, batch, tc.gamma)
    if not np.isfinite(loss):
        raise TrainingDivergedError(f"Q loss became {loss} after {len(losses)} updates")
    obj = policy_update(bundle, batch)
    if not np.isfinite(obj):
        raise TrainingDivergedError(f"policy objective became {obj}")
    soft_update(bundle.q_target, bundle.q_net, tc.tau)
    losses.append(loss)


def train(cfg: SystemConfig, train_days: Sequence, tc: TrainConfig = TrainConfig(),
          params: RewardParams = RewardParams(), features: FeatureMap | None = None) -> TrainResult:
    if not train_days:
        raise ValidationError("training set is empty")
    rng = np.random.default_rng(tc.seed)
    fmap = features or FeatureMap(cfg, include_time=tc.include_time)
    bundle = AgentBundle.create(fmap.size, cfg.n_actions, tc.hidden, tc.lr, rng)
    buffer = ReplayBuffer(tc.buffer_capacity, fmap.size, cfg.n_actions)
    env = MicrogridEnv(cfg, params)
    result = TrainResult(bundle, fmap)

    for epoch in range(tc.epochs):
        day = train_days[int(rng.integers(len(train_days)))]
        state = env.reset(day, rng=rng)
        sigma = tc.sigma(epoch)
        rewards, costs, unbalances = [], [], []
        for _ in range(min(tc.episode_length, cfg.horizon)):
            s = fmap.featurize(state)
            a = explore_action(bundle.policy_net, s, sigma, rng)
            out = env.step(denormalize_action(a, cfg))
            a_exec = normalize_action(out.executed, cfg)
            buffer.add(Transition(s, a_exec, out.reward * tc.reward_scale,
                                  fmap.featurize(out.next_state), out.done))
            rewards.append(out.reward)
            costs.append(out.operating_cost)
            unbalances.append(out.unbalance)
            state = out.next_state
            if tc.update_mode == "per_step":
                _update(bundle, buffer, tc, rng, result.losses)
            if out.done:
                break
        if tc.update_mode == "per_epoch":
            for _ in range(tc.updates_per_epoch):
                _update(bundle, buffer, tc, rng, result.losses)
        result.curves.append(CurveRow(epoch + 1, float(np.mean(rewards)),
                                      float(np.mean(costs)), float(np.mean(unbalances))))
        if (epoch + 1) % 50 == 0:
            log.info("epoch %d reward %.2f unbalance %.2f", epoch + 1,
                     result.curves[-1].reward_mean, result.curves[-1].unbalance_kw)
    return result


def write_curves(path, rows: Sequence[CurveRow]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_HEADER)
        for r in rows:
            w.writerow([r.episode, repr(r.reward_mean), repr(r.cost_mean), repr(r.unbalance_kw)])


def read_curves(path) -> list[CurveRow]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [CurveRow(int(r["episode"]), float(r["reward_mean"]), float(r["cost_mean"]),
                     float(r["unbalance_kw"])) for r in rows]


def save_agent(result: TrainResult, directory, tc: TrainConfig, metadata: dict | None = None) -> Path:
    """Write ``q_net.json`` (the artifact used for dispatch) and ``policy_net.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {"epoch": len(result.curves), "seed": tc.seed,
            "config_hash": config_hash(result.features.cfg, tc),
            "features": result.features.to_dict(), **(metadata or {})}
    neural.save(result.bundle.q_net, directory / "q_net.json", {**meta, "role": "q"})
    neural.save(result.bundle.policy_net, directory / "policy_net.json", {**meta, "role": "policy"})
    return directory / "q_net.json"


def load_agent(directory, cfg: SystemConfig) -> tuple[DenseNet, DenseNet | None, FeatureMap]:
    directory = Path(directory)
    path = directory / "q_net.json" if directory.is_dir() else directory
    data = neural.read_checkpoint(path)
    q = neural.from_dict(data)
    fmap = FeatureMap(cfg, **data.get("metadata", {}).get("features", {}))
    if q.n_inputs != fmap.size + cfg.n_actions:
        raise CheckpointError(
            f"checkpoint expects {q.n_inputs} inputs, system needs {fmap.size + cfg.n_actions}")
    pi_path = path.parent / "policy_net.json"
    pi = neural.load(pi_path) if pi_path.exists() else None
    return q, pi, fmap
