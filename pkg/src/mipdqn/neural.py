"""Dense ReLU networks in plain numpy: forward pass, exact reverse-mode
gradients, Adam, soft target updates and a JSON checkpoint format.

Checkpoint layout (JSON, UTF-8)::

    {
      "format": "mipdqn-densenet",
      "version": 1,
      "layer_sizes": [U0, U1, ..., UK],
      "params": [...],        # W^0 row-major, W^1, ..., W^{K-1}, then b^0 ... b^{K-1}
      "metadata": {...}
    }

``W^k`` has shape ``(U_{k+1}, U_k)``. Floats are written with ``repr`` so a
load/save round trip is bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CheckpointError, CheckpointVersionError, DomainError

CHECKPOINT_FORMAT = "mipdqn-densenet"
CHECKPOINT_VERSION = 1


class DenseNet:
    """Feed-forward net: ReLU on every hidden layer, identity at the output."""

    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray]):
        if len(weights) < 1 or len(weights) != len(biases):
            raise DomainError("need at least one layer and one bias per weight matrix")
        self.weights = [np.array(w, dtype=float, ndmin=2) for w in weights]
        self.biases = [np.array(b, dtype=float).reshape(-1) for b in biases]
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape[0] != b.shape[0]:
                raise DomainError(f"layer {k}: weight rows {w.shape[0]} != bias length {b.shape[0]}")
            if k and w.shape[1] != self.weights[k - 1].shape[0]:
                raise DomainError(f"layer {k}: input width {w.shape[1]} does not chain")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise DomainError(f"layer {k}: non-finite parameters")

    @classmethod
    def init(cls, layer_sizes: Sequence[int], rng=None, final_scale: float = 1e-2) -> "DenseNet":
        """He-uniform hidden layers, zero biases, last layer shrunk by ``final_scale``."""
        rng = np.random.default_rng(rng)
        weights, biases = [], []
        for k, (n_in, n_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
            limit = np.sqrt(6.0 / n_in)
            w = rng.uniform(-limit, limit, size=(n_out, n_in))
            if k == len(layer_sizes) - 2:
                w *= final_scale
            weights.append(w)
            biases.append(np.zeros(n_out))
        return cls(weights, biases)

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_outputs(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def n_hidden_units(self) -> int:
        return sum(w.shape[0] for w in self.weights[:-1])

    def params(self) -> list[np.ndarray]:
        return self.weights + self.biases

    def copy(self) -> "DenseNet":
        return DenseNet([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def __call__(self, x):
        return forward(self, x)


def _as_batch(net: DenseNet, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != net.n_inputs:
        raise DomainError(f"input has {x.shape[1]} features, network expects {net.n_inputs}")
    return x, single


def forward(net: DenseNet, x) -> np.ndarray:
    h, single = _as_batch(net, x)
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w.T + b
        if k < last:
            h = np.maximum(h, 0.0)
    return h[0] if single else h


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    inputs: np.ndarray

    def params(self) -> list[np.ndarray]:
        return self.weights + self.biases


def gradients(net: DenseNet, x, upstream) -> Gradients:
    """Reverse-mode gradients of ``sum(upstream * net(x))``.

    Parameter gradients are summed over the batch; the input gradient keeps
    the batch shape. The ReLU derivative at exactly zero is taken as 0.
    """
    h, single = _as_batch(net, x)
    g = np.atleast_2d(np.asarray(upstream, dtype=float))
    acts = [h]
    pre = []
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = acts[-1] @ w.T + b
        pre.append(z)
        acts.append(np.maximum(z, 0.0) if k < last else z)
    if g.shape != acts[-1].shape:
        raise DomainError(f"upstream shape {g.shape} does not match output {acts[-1].shape}")

    dws, dbs = [None] * len(net.weights), [None] * len(net.weights)
    for k in range(last, -1, -1):
        if k < last:
            g = g * (pre[k] > 0)
        dws[k] = g.T @ acts[k]
        dbs[k] = g.sum(axis=0)
        g = g @ net.weights[k]
    return Gradients(dws, dbs, g[0] if single else g)


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], **kw) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **kw)


def adam_step(state: AdamState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]):
    """Bias-corrected Adam descent step; updates ``params`` in place and returns them."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(grads) != len(params) or len(state.m) != len(params):
        raise DomainError("parameter, gradient and moment lists differ in length")
    state.step += 1
    c1 = 1 - state.beta1 ** state.step
    c2 = 1 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


def soft_update(target: DenseNet, source: DenseNet, tau: float) -> DenseNet:
    if not 0 <= tau <= 1:
        raise DomainError(f"tau must lie in [0, 1], got {tau}")
    if target.layer_sizes != source.layer_sizes:
        raise DomainError("soft_update needs identical architectures")
    for t, s in zip(target.params(), source.params()):
        t *= 1 - tau
        t += tau * s
    return target


def to_dict(net: DenseNet, metadata: dict | None = None) -> dict:
    flat = [float(v) for w in net.weights for v in w.ravel(order="C")]
    flat += [float(v) for b in net.biases for v in b]
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layer_sizes": net.layer_sizes,
        "params": flat,
        "metadata": metadata or {},
    }


def from_dict(data: dict) -> DenseNet:
    if not isinstance(data, dict) or data.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError("not a DenseNet checkpoint")
    if data.get("version") != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint version {data.get('version')!r} unsupported (expected {CHECKPOINT_VERSION})")
    try:
        sizes = [int(s) for s in data["layer_sizes"]]
        flat = np.asarray(data["params"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from None
    n_w = sum(a * b for a, b in zip(sizes[:-1], sizes[1:]))
    n_b = sum(sizes[1:])
    if len(sizes) < 2 or flat.size != n_w + n_b:
        raise CheckpointError(f"parameter count {flat.size} does not match layer sizes {sizes}")
    weights, biases, pos = [], [], 0
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        weights.append(flat[pos:pos + n_in * n_out].reshape(n_out, n_in))
        pos += n_in * n_out
    for n_out in sizes[1:]:
        biases.append(flat[pos:pos + n_out])
        pos += n_out
    try:
        return DenseNet(weights, biases)
    except DomainError as exc:
        raise CheckpointError(str(exc)) from None


def save(net: DenseNet, path, metadata: dict | None = None) -> None:
    Path(path).write_text(json.dumps(to_dict(net, metadata)), encoding="utf-8")


def load(path) -> DenseNet:
    return from_dict(read_checkpoint(path))


def read_checkpoint(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from None
