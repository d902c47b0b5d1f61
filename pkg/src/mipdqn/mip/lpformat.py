"""CPLEX LP text export (and a reader for the same dialect).

The dialect written here:

* sections ``Maximize``/``Minimize``, ``Subject To``, ``Bounds``,
  ``Binaries``, ``End``;
* one row per line as ``name: coef var + coef var ... <op> rhs`` with ``<op>``
  one of ``<=``, ``>=``, ``=``; ranged rows become two rows suffixed
  ``_lo``/``_hi``;
* every variable gets an explicit bound line (``lb <= v <= ub``,
  ``v = value``, ``v free``, ``-inf <= v <= ub`` ...);
* numbers are printed with ``repr`` so reading the file back is exact;
* variables are named ``v0, v1, ...`` in model order. The semantic
  names live in a sidecar JSON (``<path>.names.json``).
"""

from __future__ import annotations

import json
import math
import re
from pathlib import Path

from ..errors import ParseError
from .model import MipModel


def _num(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def _expr(coefs: dict[int, float]) -> str:
    if not coefs:
        return "0 v0"
    parts = []
    for i in sorted(coefs):
        c = coefs[i]
        sign = "-" if c < 0 or (c == 0 and math.copysign(1, c) < 0) else "+"
        parts.append(f"{sign} {_num(abs(c))} v{i}")
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def to_lp_string(model: MipModel) -> str:
    lines = [f"\\ {model.name}", "Maximize" if model.sense == "max" else "Minimize"]
    obj = _expr({i: c for i, c in model.objective.items() if c != 0.0})
    if model.objective_constant:
        obj += f" + {_num(model.objective_constant)} constant"
    lines.append(f" obj: {obj}")
    lines.append("Subject To")
    for r, row in enumerate(model.rows):
        expr = _expr(row.coefs)
        name = f"c{r}"
        if row.is_equality:
            lines.append(f" {name}: {expr} = {_num(row.lo)}")
            continue
        has_lo, has_hi = math.isfinite(row.lo), math.isfinite(row.hi)
        if has_lo and has_hi:
            lines.append(f" {name}_lo: {expr} >= {_num(row.lo)}")
            lines.append(f" {name}_hi: {expr} <= {_num(row.hi)}")
        elif has_hi:
            lines.append(f" {name}: {expr} <= {_num(row.hi)}")
        elif has_lo:
            lines.append(f" {name}: {expr} >= {_num(row.lo)}")
    lines.append("Bounds")
    for i in range(model.n_vars):
        lb, ub = model.lb[i], model.ub[i]
        if lb == ub:
            lines.append(f" v{i} = {_num(lb)}")
        elif math.isinf(lb) and math.isinf(ub):
            lines.append(f" v{i} free")
        else:
            lines.append(f" {_num(lb)} <= v{i} <= {_num(ub)}")
    if model.objective_constant:
        lines.append(" constant = 1")
    bins = [f"v{i}" for i, b in enumerate(model.binary) if b]
    if bins:
        lines.append("Binaries")
        for k in range(0, len(bins), 10):
            lines.append(" " + " ".join(bins[k:k + 10]))
    lines.append("End")
    return "\n".join(lines) + "\n"


def export_lp(model: MipModel, path) -> Path:
    """Write ``path`` plus the ``<path>.names.json`` sidecar; returns the sidecar path."""
    path = Path(path)
    path.write_text(to_lp_string(model), encoding="utf-8")
    sidecar = path.with_name(path.name + ".names.json")
    sidecar.write_text(json.dumps(model.name_map(), indent=1, sort_keys=True), encoding="utf-8")
    return sidecar


_TERM = re.compile(r"([+-])?\s*([^\s+-][^\s]*)\s+(v\d+|constant)")


def _parse_expr(text: str, lineno: int) -> dict[str, float]:
    text = text.strip()
    out: dict[str, float] = {}
    pos = 0
    while pos < len(text):
        m = _TERM.match(text, pos)
        if not m:
            raise ParseError(f"cannot parse expression near {text[pos:pos + 20]!r}", line=lineno)
        coef = float(m.group(2)) * (-1.0 if m.group(1) == "-" else 1.0)
        out[m.group(3)] = out.get(m.group(3), 0.0) + coef
        pos = m.end()
        while pos < len(text) and text[pos] == " ":
            pos += 1
    return out


def read_lp(path) -> MipModel:
    """Parse a file written by :func:`export_lp` back into a :class:`MipModel`."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    sidecar = path.with_name(path.name + ".names.json")
    names = json.loads(sidecar.read_text()) if sidecar.exists() else None

    section = None
    sense = "max"
    obj: dict[str, float] = {}
    rows: list[tuple[dict[str, float], str, float]] = []
    bounds: dict[str, tuple[float, float]] = {}
    binaries: set[str] = set()
    n_vars = 0

    def track(name):
        nonlocal n_vars
        if name.startswith("v"):
            n_vars = max(n_vars, int(name[1:]) + 1)

    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("\\"):
            continue
        low = line.lower()
        if low in ("maximize", "minimize"):
            section, sense = "obj", "max" if low == "maximize" else "min"
            continue
        if low in ("subject to", "bounds", "binaries", "end"):
            section = low
            continue
        if section == "obj":
            obj = _parse_expr(line.split(":", 1)[1], lineno)
        elif section == "subject to":
            body = line.split(":", 1)[1]
            m = re.match(r"(.*?)(<=|>=|=)\s*(\S+)$", body)
            if not m:
                raise ParseError(f"bad constraint {line!r}", line=lineno)
            rows.append((_parse_expr(m.group(1), lineno), m.group(2), float(m.group(3))))
        elif section == "bounds":
            parts = line.split()
            if len(parts) == 2 and parts[1] == "free":
                bounds[parts[0]] = (-math.inf, math.inf)
            elif len(parts) == 3 and parts[1] == "=":
                bounds[parts[0]] = (float(parts[2]), float(parts[2]))
            elif len(parts) == 5 and parts[1] == parts[3] == "<=":
                bounds[parts[2]] = (float(parts[0]), float(parts[4]))
            else:
                raise ParseError(f"bad bound {line!r}", line=lineno)
        elif section == "binaries":
            binaries.update(line.split())
        for tok in re.findall(r"v\d+", line):
            track(tok)

    model = MipModel(names["model"] if names else path.stem)
    for i in range(n_vars):
        name = f"v{i}"
        lb, ub = bounds.get(name, (0.0, math.inf))
        meta = names["variables"][i] if names else {"name": name, "kind": "aux", "layer": None, "unit": None}
        model.add_var(meta["name"], lb, ub, binary=name in binaries, kind=meta["kind"],
                      layer=meta["layer"], unit=meta["unit"])
    idx = lambda d: {int(k[1:]): c for k, c in d.items() if k.startswith("v")}  # noqa: E731
    for coefs, op, rhs in rows:
        lo = rhs if op in (">=", "=") else -math.inf
        hi = rhs if op in ("<=", "=") else math.inf
        model.add_row(idx(coefs), lo, hi)
    model.set_objective(idx(obj), sense, obj.get("constant", 0.0))
    if names:
        model.inputs = [model.index(n) for n in names["inputs"]]
        model.outputs = [model.index(n) for n in names["outputs"]]
    return model
