"""TOML model files.

Sections: ``[manifold]``, ``[lagrangian]``, ``[[symmetries]]``, ``[noether]``,
``[connection]``, ``[control]``, ``[constraints]``, ``[integrate]``.
Expressions are strings in the symcore grammar.
"""
from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import symcore
from .errors import ParseError
from .geometry import Chart
from .symcore import Expr
from .tangentgeo import TangentChart

KINDS = ("on_TQ", "along_tau")


@dataclass
class SymmetryEntry:
    components: list[Expr]
    gauge: Expr | None
    kind: str


@dataclass
class ConnectionSection:
    metric: list[list[Expr]] | None = None
    coefficients: list[list[Expr]] | None = None
    christoffel: list | None = None
    linear: bool = False
    guard: Expr | None = None
    transport: dict | None = None


@dataclass
class ControlSection:
    A: list | None = None
    B: list | None = None
    generators: list[list[Expr]] | None = None
    point: list[float] | None = None
    target: list[float] | None = None
    budget: int = 12


@dataclass
class Model:
    name: str
    sha256: str
    raw: dict
    coords: tuple[str, ...] = ()
    velocities: tuple[str, ...] | None = None
    lagrangian: Expr | None = None
    symmetries: list[SymmetryEntry] = field(default_factory=list)
    constants: list[Expr] = field(default_factory=list)
    noether: dict = field(default_factory=dict)
    connection: ConnectionSection | None = None
    control: ControlSection | None = None
    constraints: dict = field(default_factory=dict)
    integrate: dict = field(default_factory=dict)

    @property
    def chart(self) -> TangentChart:
        return TangentChart.from_base(self.coords, self.velocities)

    @property
    def base_chart(self) -> Chart:
        return Chart(self.name, self.coords)


def _need(cond: bool, msg: str):
    if not cond:
        raise ParseError(msg)


def _expr(text, allowed, where: str) -> Expr:
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return symcore.as_expr(text)
    _need(isinstance(text, str), f"{where}: expected an expression string, got {text!r}")
    try:
        return symcore.parse(text, allowed)
    except ParseError as exc:
        raise ParseError(f"{where}: {exc}") from None


def _exprs(items, allowed, where: str) -> list:
    _need(isinstance(items, list), f"{where}: expected a list")
    return [_exprs(x, allowed, f"{where}[{i}]") if isinstance(x, list) else _expr(x, allowed, f"{where}[{i}]")
            for i, x in enumerate(items)]


def _floats(items, where: str) -> list[float]:
    _need(isinstance(items, list) and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in items),
          f"{where}: expected a list of numbers")
    return [float(x) for x in items]


def parse_model(text: str, name: str = "model") -> Model:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"invalid TOML: {exc}") from None
    model = Model(name, hashlib.sha256(text.encode()).hexdigest(), raw)

    man = raw.get("manifold", {})
    if man:
        coords = man.get("coords")
        _need(isinstance(coords, list) and coords and all(isinstance(c, str) for c in coords),
              "[manifold] coords must be a non-empty list of names")
        model.coords = tuple(coords)
        if "velocities" in man:
            model.velocities = tuple(man["velocities"])
    tq = model.chart.TQ.coords if model.coords else ()

    if "lagrangian" in raw:
        _need(bool(model.coords), "[lagrangian] needs a [manifold] section")
        model.lagrangian = _expr(raw["lagrangian"].get("L"), tq, "[lagrangian] L")

    for k, s in enumerate(raw.get("symmetries", [])):
        where = f"[[symmetries]] #{k + 1}"
        kind = s.get("kind", "along_tau")
        _need(kind in KINDS, f"{where}: kind must be one of {KINDS}")
        comps = _exprs(s.get("components"), tq, f"{where} components")
        want = 2 * len(model.coords) if kind == "on_TQ" else len(model.coords)
        _need(len(comps) == want, f"{where}: expected {want} components for kind {kind}")
        gauge = _expr(s["gauge"], tq, f"{where} gauge") if "gauge" in s else None
        model.symmetries.append(SymmetryEntry(comps, gauge, kind))
    if model.symmetries:
        _need(model.lagrangian is not None, "[[symmetries]] needs a [lagrangian] section")

    if "noether" in raw:
        model.noether = dict(raw["noether"])
        model.constants = _exprs(model.noether.pop("constants", []), tq, "[noether] constants")

    if "connection" in raw:
        c = raw["connection"]
        q = model.coords
        _need(bool(q), "[connection] needs a [manifold] section")
        sec = ConnectionSection(linear=bool(c.get("linear", False)))
        if "metric" in c:
            sec.metric = _exprs(c["metric"], q, "[connection] metric")
            sec.linear = True
        elif "christoffel" in c:
            sec.christoffel = _exprs(c["christoffel"], q, "[connection] christoffel")
            sec.linear = True
        elif "coefficients" in c:
            sec.coefficients = _exprs(c["coefficients"], tq, "[connection] coefficients")
        else:
            raise ParseError("[connection] needs metric, christoffel or coefficients")
        if "guard" in c:
            sec.guard = _expr(c["guard"], q, "[connection] guard")
        if "transport" in c:
            t = dict(c["transport"])
            t["curve"] = _exprs(t.get("curve"), ("t",), "[connection.transport] curve")
            t["X0"] = _floats(t.get("X0"), "[connection.transport] X0")
            sec.transport = t
        model.connection = sec

    if "control" in raw:
        c = raw["control"]
        sec = ControlSection(budget=int(c.get("budget", 12)))
        if "A" in c or "B" in c:
            _need("A" in c and "B" in c, "[control] needs both A and B")
            sec.A = [_floats(r, "[control] A") for r in c["A"]]
            sec.B = [_floats(r, "[control] B") for r in c["B"]]
        if "generators" in c:
            _need(bool(model.coords), "[control] generators need a [manifold] section")
            sec.generators = _exprs(c["generators"], model.coords, "[control] generators")
            _need(all(len(g) == len(model.coords) for g in sec.generators),
                  "[control] every generator needs one component per coordinate")
        _need(sec.A is not None or sec.generators is not None, "[control] needs A/B or generators")
        if "point" in c:
            sec.point = _floats(c["point"], "[control] point")
        if "target" in c:
            sec.target = _floats(c["target"], "[control] target")
        model.control = sec

    model.constraints = dict(raw.get("constraints", {}))
    model.integrate = dict(raw.get("integrate", {}))
    if "x0" in model.integrate:
        model.integrate["x0"] = _floats(model.integrate["x0"], "[integrate] x0")
    return model


def load_model(path) -> Model:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read model file: {exc}") from None
    return parse_model(text, path.stem)
