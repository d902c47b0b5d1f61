"""Compile a frozen ReLU network into a MIP.

Every hidden unit ``j`` of layer ``k`` gets a post-activation variable
``x_k_j``. Units that may switch inside the input box additionally get a
slack ``s_k_j`` and a binary ``z_k_j`` with::

    W x_prev + b = x - s,   x <= ub_x * (1 - z),   s <= ub_s * z

so ``z = 1`` forces ``x = 0`` and ``z = 0`` forces ``s = 0``. Units that are
provably dead (upper pre-activation bound <= 0) have ``x`` fixed to 0, and
provably active units are linear (``x = W x_prev + b``); neither gets a
binary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import DomainError, UnsupportedArchitectureError
from ..neural import DenseNet
from .model import MipModel


@dataclass
class UnitBounds:
    """Pre-activation intervals per layer (hidden layers then the output layer)."""

    pre_lo: list[np.ndarray]
    pre_hi: list[np.ndarray]

    def x_bounds(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        return np.maximum(self.pre_lo[k], 0.0), np.maximum(self.pre_hi[k], 0.0)

    def s_bounds(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        return np.maximum(-self.pre_hi[k], 0.0), np.maximum(-self.pre_lo[k], 0.0)

    @property
    def output(self) -> tuple[np.ndarray, np.ndarray]:
        return self.pre_lo[-1], self.pre_hi[-1]

    def n_unstable(self) -> int:
        return int(sum(np.sum((lo < 0) & (hi > 0)) for lo, hi in zip(self.pre_lo[:-1], self.pre_hi[:-1])))


def _box(net: DenseNet, input_box) -> tuple[np.ndarray, np.ndarray]:
    box = np.asarray(input_box, dtype=float)
    if box.shape != (net.n_inputs, 2):
        raise DomainError(f"input box must have shape ({net.n_inputs}, 2), got {box.shape}")
    if not np.all(np.isfinite(box)) or np.any(box[:, 0] > box[:, 1]):
        raise DomainError("input box must be finite with lb <= ub")
    return box[:, 0].copy(), box[:, 1].copy()


def propagate_bounds(net: DenseNet, input_box, method: str = "interval") -> UnitBounds:
    """Pre-activation bounds over an input box.

    ``interval`` is plain interval arithmetic with weights split by sign.
    ``symbolic`` back-substitutes linear relaxations of earlier ReLUs down to
    the inputs and keeps the tighter of the two per unit.
    """
    if method not in ("interval", "symbolic"):
        raise DomainError(f"unknown bound method {method!r}")
    lo, hi = _box(net, input_box)
    box_lo, box_hi = lo, hi
    pre_lo, pre_hi = [], []
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        wp, wn = np.maximum(w, 0.0), np.minimum(w, 0.0)
        z_lo = wp @ lo + wn @ hi + b
        z_hi = wp @ hi + wn @ lo + b
        if method == "symbolic" and k > 0:
            a, c = linear_bound(net, k, pre_lo, pre_hi, upper=True)
            z_hi = np.minimum(z_hi, np.maximum(a, 0) @ box_hi + np.minimum(a, 0) @ box_lo + c)
            a, c = linear_bound(net, k, pre_lo, pre_hi, upper=False)
            z_lo = np.maximum(z_lo, np.maximum(a, 0) @ box_lo + np.minimum(a, 0) @ box_hi + c)
            # Guard against round-off inverting a degenerate interval.
            z_lo = np.minimum(z_lo, z_hi)
        pre_lo.append(z_lo)
        pre_hi.append(z_hi)
        if k < last:
            lo, hi = np.maximum(z_lo, 0.0), np.maximum(z_hi, 0.0)
    return UnitBounds(pre_lo, pre_hi)


def linear_bound(net: DenseNet, k: int, pre_lo, pre_hi, upper: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """``(A, c)`` with ``A @ x + c`` bounding layer ``k``'s pre-activations from
    above (or below) for every input ``x`` in the box the bounds came from.

    Each undecided ReLU is replaced by its triangle upper edge or by one of
    the lines ``0`` / identity below it, whichever the coefficient sign needs.
    """
    sign = 1.0 if upper else -1.0
    a = sign * net.weights[k]
    c = sign * net.biases[k]
    for m in range(k - 1, -1, -1):
        lo, hi = pre_lo[m], pre_hi[m]
        active, dead = lo >= 0, hi <= 0
        open_ = ~active & ~dead
        slope_up = active.astype(float)
        shift_up = np.zeros_like(lo)
        slope_up[open_] = hi[open_] / (hi[open_] - lo[open_])
        shift_up[open_] = -slope_up[open_] * lo[open_]
        slope_dn = active.astype(float)
        slope_dn[open_] = (hi[open_] > -lo[open_]).astype(float)
        ap, an = np.maximum(a, 0.0), np.minimum(a, 0.0)
        c = c + ap @ shift_up
        a = ap * slope_up + an * slope_dn
        c = c + a @ net.biases[m]
        a = a @ net.weights[m]
    return sign * a, sign * c


def _pad(v: float) -> float:
    # Outward slack so rounding in interval arithmetic never cuts off a feasible point.
    return v + 1e-9 * (1.0 + abs(v))


def encode_network(net: DenseNet, input_box, activation: str = "relu",
                   input_names: Sequence[str] | None = None, bounds: UnitBounds | str = "symbolic") -> MipModel:
    """Big-M model of ``net`` over ``input_box``; ``bounds`` is a method name or precomputed bounds."""
    if activation != "relu":
        raise UnsupportedArchitectureError(f"only ReLU hidden layers can be encoded, got {activation!r}")
    lo, hi = _box(net, input_box)
    if isinstance(bounds, str):
        bounds = propagate_bounds(net, input_box, bounds)
    model = MipModel("relu_net")
    model.bounds = bounds
    prev = []
    for j in range(net.n_inputs):
        name = input_names[j] if input_names else f"in_{j}"
        prev.append(model.add_var(name, lo[j], hi[j], kind="input", layer=0, unit=j))
    model.inputs = list(prev)

    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        layer = k + 1
        cur = []
        for j in range(w.shape[0]):
            pre = {v: w[j, i] for i, v in enumerate(prev)}
            z_lo, z_hi = bounds.pre_lo[k][j], bounds.pre_hi[k][j]
            if k == last:
                y = model.add_var(f"out_{j}", -_pad(-z_lo), _pad(z_hi), kind="output", layer=layer, unit=j)
                model.add_row({**pre, y: -1.0}, -b[j], -b[j], name=f"out_{j}")
                cur.append(y)
                continue
            if z_hi <= 0:
                cur.append(model.add_var(f"x_{layer}_{j}", 0.0, 0.0, kind="x", layer=layer, unit=j))
                continue
            x = model.add_var(f"x_{layer}_{j}", 0.0, _pad(z_hi), kind="x", layer=layer, unit=j)
            cur.append(x)
            if z_lo >= 0:
                model.add_row({**pre, x: -1.0}, -b[j], -b[j], name=f"lin_{layer}_{j}")
                continue
            ub_x, ub_s = _pad(z_hi), _pad(-z_lo)
            s = model.add_var(f"s_{layer}_{j}", 0.0, ub_s, kind="s", layer=layer, unit=j)
            z = model.add_var(f"z_{layer}_{j}", 0.0, 1.0, binary=True, kind="z", layer=layer, unit=j)
            model.add_row({**pre, x: -1.0, s: 1.0}, -b[j], -b[j], name=f"relu_{layer}_{j}")
            model.add_row({x: 1.0, z: ub_x}, hi=ub_x, name=f"on_{layer}_{j}")
            model.add_row({s: 1.0, z: -ub_s}, hi=0.0, name=f"off_{layer}_{j}")
        prev = cur
    model.outputs = list(prev)
    return model


def fix_inputs(model: MipModel, indices: Sequence[int], values: Sequence[float],
               tol: float = 1e-9) -> MipModel:
    """Return a copy with the listed network inputs pinned to ``values``."""
    if len(indices) != len(values):
        raise DomainError("indices and values differ in length")
    out = model.copy()
    for i, v in zip(indices, values):
        var = model.inputs[i]
        lb, ub = model.lb[var], model.ub[var]
        if not lb - tol <= v <= ub + tol:
            raise DomainError(f"input {i} value {v} outside its box [{lb}, {ub}]")
        v = min(max(float(v), lb), ub)
        out.lb[var] = out.ub[var] = v
    return out


def set_objective_max_output(model: MipModel) -> MipModel:
    if len(model.outputs) != 1:
        raise DomainError(f"expected exactly one output variable, found {len(model.outputs)}")
    model.set_objective({model.outputs[0]: 1.0}, sense="max")
    return model
