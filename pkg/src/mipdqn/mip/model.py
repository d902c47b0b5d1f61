"""Solver-agnostic mixed-integer linear program."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ..errors import DomainError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
TIME_LIMIT = "time_limit"

INF = math.inf


@dataclass(frozen=True)
class VarInfo:
    name: str
    kind: str                    # "input", "x", "s", "z", "output", "aux"
    layer: int | None = None
    unit: int | None = None


@dataclass
class Row:
    """Ranged linear row ``lo <= sum(coefs[i] * var_i) <= hi``."""

    coefs: dict[int, float]
    lo: float
    hi: float
    name: str = ""

    @property
    def is_equality(self) -> bool:
        return self.lo == self.hi


@dataclass
class SolveResult:
    status: str
    objective: float | None = None
    values: np.ndarray | None = None
    wall_time: float = 0.0
    message: str = ""

    def value(self, model: "MipModel", name: str) -> float:
        return float(self.values[model.index(name)])


class MipModel:
    """Variables with bounds, ranged linear rows and a linear objective.

    Binary variables are only ever created with kind ``"z"`` (ReLU activation
    indicators) or ``"aux"`` for modelling helpers.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.binary: list[bool] = []
        self.info: list[VarInfo] = []
        self.rows: list[Row] = []
        self.sense = "max"
        self.objective: dict[int, float] = {}
        self.objective_constant = 0.0
        self._by_name: dict[str, int] = {}
        # Semantic handles filled in by builders.
        self.inputs: list[int] = []
        self.outputs: list[int] = []

    @property
    def n_vars(self) -> int:
        return len(self.lb)

    @property
    def n_binaries(self) -> int:
        return sum(self.binary)

    def add_var(self, name: str, lb: float = -INF, ub: float = INF, binary: bool = False,
                kind: str = "aux", layer: int | None = None, unit: int | None = None) -> int:
        if name in self._by_name:
            raise DomainError(f"duplicate variable name {name!r}")
        if binary:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        idx = len(self.lb)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.binary.append(binary)
        self.info.append(VarInfo(name, kind, layer, unit))
        self._by_name[name] = idx
        return idx

    def index(self, name: str) -> int:
        return self._by_name[name]

    def add_row(self, coefs: Mapping[int, float], lo: float = -INF, hi: float = INF, name: str = "") -> Row:
        for i in coefs:
            if not 0 <= i < self.n_vars:
                raise DomainError(f"row {name!r} references undeclared variable {i}")
        row = Row({int(i): float(c) for i, c in coefs.items() if c != 0.0}, float(lo), float(hi),
                  name or f"r{len(self.rows)}")
        self.rows.append(row)
        return row

    def set_objective(self, coefs: Mapping[int, float], sense: str = "max", constant: float = 0.0):
        if sense not in ("max", "min"):
            raise DomainError(f"objective sense must be 'max' or 'min', got {sense!r}")
        self.sense = sense
        self.objective = {int(i): float(c) for i, c in coefs.items()}
        self.objective_constant = float(constant)

    def copy(self) -> "MipModel":
        return copy.deepcopy(self)

    def evaluate(self, values) -> float:
        v = np.asarray(values, dtype=float)
        return self.objective_constant + sum(c * v[i] for i, c in self.objective.items())

    def max_violation(self, values) -> float:
        """Largest bound, row or integrality violation of an assignment."""
        v = np.asarray(values, dtype=float)
        worst = 0.0
        for i in range(self.n_vars):
            worst = max(worst, self.lb[i] - v[i], v[i] - self.ub[i])
            if self.binary[i]:
                worst = max(worst, abs(v[i] - round(v[i])))
        for row in self.rows:
            act = sum(c * v[i] for i, c in row.coefs.items())
            worst = max(worst, row.lo - act, act - row.hi)
        return worst

    def name_map(self) -> dict:
        return {
            "model": self.name,
            "variables": [
                {"name": vi.name, "kind": vi.kind, "layer": vi.layer, "unit": vi.unit}
                for vi in self.info
            ],
            "inputs": [self.info[i].name for i in self.inputs],
            "outputs": [self.info[i].name for i in self.outputs],
        }

    def arrays(self):
        """Dense-free view used by backends: (c, A as COO triplets, row lo, row hi)."""
        c = np.zeros(self.n_vars)
        for i, coef in self.objective.items():
            c[i] = coef
        rows, cols, data = [], [], []
        for r, row in enumerate(self.rows):
            for i, coef in row.coefs.items():
                rows.append(r)
                cols.append(i)
                data.append(coef)
        lo = np.array([row.lo for row in self.rows])
        hi = np.array([row.hi for row in self.rows])
        return c, (np.array(rows, dtype=int), np.array(cols, dtype=int), np.array(data)), lo, hi
