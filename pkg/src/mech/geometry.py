"""Charts, smooth maps, and vector fields / forms along maps.

A vector field along ``phi: N -> M`` stores one component per coordinate of
``M`` as an expression in the coordinates of ``N``. A p-form along ``phi``
stores coefficients for strictly increasing index tuples of ``M``'s
coordinates, again as expressions on ``N``. With ``phi`` the identity these
are ordinary fields and forms.

Contractions and Lie derivatives of forms on ``M`` along ``phi`` are returned
as forms on ``N`` (identity base), i.e. the phi-semibasic form identified
with the form along ``phi``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
import sympy as sp

from . import symcore
from .errors import ChartMismatch, DegreeError, NotABundleChart, NotOnIdentity
from .symcore import Expr, as_expr, raw_add, raw_mul, simplify, syms

ZERO = sp.Integer(0)
ONE = sp.Integer(1)


@dataclass(frozen=True)
class Chart:
    """A coordinate chart.

    ``bundle`` tags charts of TM (``"TM"``), T*M (``"T*M"``) and T^2M
    (``"T2M"``); for those the first ``len(base.coords)`` coordinates are the
    base coordinates and the rest are fibre coordinates.
    """

    name: str
    coords: tuple[str, ...]
    bundle: str | None = None
    base: "Chart | None" = None
    # reserved for graded manifolds; always even here
    parity: tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(self.coords))
        if not self.coords:
            raise ValueError("a chart needs at least one coordinate")
        if len(set(self.coords)) != len(self.coords):
            raise ValueError(f"duplicate coordinates in chart {self.name}: {self.coords}")
        if not self.parity:
            object.__setattr__(self, "parity", (0,) * len(self.coords))

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def symbols(self) -> tuple[sp.Symbol, ...]:
        return syms(self.coords)

    @property
    def fibre(self) -> tuple[str, ...]:
        if self.base is None:
            return ()
        return self.coords[self.base.dim:]

    def index(self, name: str) -> int:
        return self.coords.index(name)


def tangent_chart(base: Chart, velocities: Sequence[str] | None = None) -> Chart:
    vel = tuple(velocities) if velocities else tuple(f"v_{c}" for c in base.coords)
    return Chart(f"T{base.name}", base.coords + vel, "TM", base)


def cotangent_chart(base: Chart, momenta: Sequence[str] | None = None) -> Chart:
    mom = tuple(momenta) if momenta else tuple(f"p_{c}" for c in base.coords)
    return Chart(f"T*{base.name}", base.coords + mom, "T*M", base)


@dataclass(frozen=True)
class SmoothMap:
    source: Chart
    target: Chart
    components: tuple[Expr, ...]

    def __post_init__(self):
        comps = tuple(as_expr(c) for c in self.components)
        object.__setattr__(self, "components", comps)
        if len(comps) != self.target.dim:
            raise ChartMismatch(f"map needs {self.target.dim} components, got {len(comps)}")
        allowed = set(self.source.symbols)
        for c in comps:
            extra = c.free_symbols - allowed
            if extra:
                raise ChartMismatch(f"component {c} uses non-source symbols {sorted(map(str, extra))}")

    @property
    def table(self) -> dict:
        return dict(zip(self.target.symbols, self.components))

    def pull(self, h) -> Expr:
        """``h o phi`` for a function ``h`` on the target."""
        return _pull(self, as_expr(h))

    @property
    def is_identity(self) -> bool:
        return self.source == self.target and self.components == self.source.symbols


@lru_cache(maxsize=4096)
def _pull(phi: SmoothMap, h: Expr) -> Expr:
    return simplify(h.xreplace(phi.table))


def identity(chart: Chart) -> SmoothMap:
    return SmoothMap(chart, chart, chart.symbols)


def projection(bundle: Chart) -> SmoothMap:
    """Bundle projection onto the base chart."""
    if bundle.base is None:
        raise NotABundleChart(f"{bundle.name} has no base chart")
    return SmoothMap(bundle, bundle.base, bundle.symbols[: bundle.base.dim])


def compose(psi: SmoothMap, phi: SmoothMap) -> SmoothMap:
    """``psi o phi``."""
    if phi.target != psi.source:
        raise ChartMismatch("maps are not composable")
    return SmoothMap(phi.source, psi.target, tuple(phi.pull(c) for c in psi.components))


@lru_cache(maxsize=1024)
def tangent_map(phi: SmoothMap) -> sp.ImmutableMatrix:
    """Jacobian ``d phi^i / d z^A`` (dim M x dim N)."""
    return sp.ImmutableMatrix(
        [[simplify(symcore.diff(c, z)) for z in phi.source.symbols] for c in phi.components]
    )


# --------------------------------------------------------------------------
# vector fields along maps


@dataclass(frozen=True)
class VectorFieldAlongMap:
    base: SmoothMap
    components: tuple[Expr, ...]

    def __post_init__(self):
        comps = tuple(as_expr(c) for c in self.components)
        object.__setattr__(self, "components", comps)
        if len(comps) != self.base.target.dim:
            raise ChartMismatch(
                f"field along a map into {self.base.target.name} needs "
                f"{self.base.target.dim} components, got {len(comps)}"
            )

    @property
    def source(self) -> Chart:
        return self.base.source

    @property
    def target(self) -> Chart:
        return self.base.target

    def simplified(self) -> "VectorFieldAlongMap":
        return VectorFieldAlongMap(self.base, tuple(simplify(c) for c in self.components))

    def _check(self, other):
        if self.base != other.base:
            raise ChartMismatch("fields live along different maps")

    def __add__(self, other):
        self._check(other)
        return VectorFieldAlongMap(self.base, tuple(simplify(a + b) for a, b in zip(self.components, other.components)))

    def __sub__(self, other):
        self._check(other)
        return VectorFieldAlongMap(self.base, tuple(simplify(a - b) for a, b in zip(self.components, other.components)))

    def scale(self, f) -> "VectorFieldAlongMap":
        f = as_expr(f)
        return VectorFieldAlongMap(self.base, tuple(simplify(f * a) for a in self.components))

    def __neg__(self):
        return self.scale(-1)

    def substitute(self, bindings: Mapping) -> "VectorFieldAlongMap":
        return VectorFieldAlongMap(self.base, tuple(symcore.substitute(c, bindings) for c in self.components))

    def __str__(self):
        parts = [f"({symcore.to_text(c)})*d/d{x}" for c, x in zip(self.components, self.target.coords) if c != 0]
        return " + ".join(parts) or "0"


def vector_field(chart: Chart, components: Sequence) -> VectorFieldAlongMap:
    """Ordinary vector field on ``chart``."""
    return VectorFieldAlongMap(identity(chart), tuple(as_expr(c) for c in components))


def promote(Y: VectorFieldAlongMap, phi: SmoothMap) -> VectorFieldAlongMap:
    """``T phi o Y`` for a field ``Y`` on the source of ``phi``."""
    if not Y.base.is_identity or Y.target != phi.source:
        raise ChartMismatch("promote needs a field on the source of phi")
    J = tangent_map(phi)
    comps = tuple(simplify(sum((J[i, a] * Y.components[a] for a in range(phi.source.dim)), ZERO))
                  for i in range(phi.target.dim))
    return VectorFieldAlongMap(phi, comps)


def restrict(X: VectorFieldAlongMap, phi: SmoothMap) -> VectorFieldAlongMap:
    """``X o phi`` for a field ``X`` on the target of ``phi``."""
    if not X.base.is_identity or X.target != phi.target:
        raise ChartMismatch("restrict needs a field on the target of phi")
    return VectorFieldAlongMap(phi, tuple(phi.pull(c) for c in X.components))


def phi_related(Y: VectorFieldAlongMap, X: VectorFieldAlongMap, phi: SmoothMap,
                rng: np.random.Generator | None = None, tol: float = 1e-9) -> bool:
    rng = symcore.default_rng(0) if rng is None else rng
    diff = promote(Y, phi) - restrict(X, phi)
    return symcore.numerically_zero(diff.components, rng, 20, tol)


def act(X: VectorFieldAlongMap, h) -> Expr:
    """``X h``: derivative of a function on the target, as a function on the source."""
    h = as_expr(h)
    table = X.base.table
    total = ZERO
    for comp, x in zip(X.components, X.target.symbols):
        if comp == 0:
            continue
        d = symcore.diff(h, x)
        if d != 0:
            total += comp * d.xreplace(table)
    return simplify(total)


def lie_bracket(X: VectorFieldAlongMap, Y: VectorFieldAlongMap) -> VectorFieldAlongMap:
    """``[X, Y]^i = X(Y^i) - Y(X^i)`` for ordinary fields on one chart."""
    if not (X.base.is_identity and Y.base.is_identity) or X.target != Y.target:
        raise ChartMismatch("bracket needs two fields on the same chart")
    return VectorFieldAlongMap(
        X.base, tuple(simplify(act(X, b) - act(Y, a)) for a, b in zip(X.components, Y.components))
    )


# --------------------------------------------------------------------------
# forms along maps


def _sort_sign(idx: Sequence[int]) -> tuple[int, tuple[int, ...] | None]:
    """Sign of the sorting permutation and the sorted tuple (None if repeated)."""
    idx = list(idx)
    if len(set(idx)) != len(idx):
        return 0, None
    sign = 1
    for i in range(len(idx)):
        for j in range(len(idx) - 1 - i):
            if idx[j] > idx[j + 1]:
                idx[j], idx[j + 1] = idx[j + 1], idx[j]
                sign = -sign
    return sign, tuple(idx)


def _det(rows: list[list[Expr]]) -> Expr:
    n = len(rows)
    if n == 0:
        return ONE
    if n == 1:
        return rows[0][0]
    if n == 2:
        return raw_add([raw_mul(rows[0][0], rows[1][1]), raw_mul(-1, rows[0][1], rows[1][0])])
    terms = []
    for perm in itertools.permutations(range(n)):
        sign, _ = _sort_sign(perm)
        terms.append(raw_mul(sign, *(rows[i][j] for i, j in enumerate(perm))))
    return raw_add(terms)


@dataclass(frozen=True, eq=False)
class FormAlongMap:
    base: SmoothMap
    degree: int
    coeffs: Mapping[tuple[int, ...], Expr]

    def __post_init__(self):
        if self.degree < 0 or (self.degree > self.base.target.dim and self.coeffs):
            raise DegreeError(f"degree {self.degree} impossible on {self.base.target.name}")
        clean = {}
        for idx, c in self.coeffs.items():
            idx = tuple(idx)
            if len(idx) != self.degree:
                raise DegreeError(f"index {idx} does not match degree {self.degree}")
            sign, key = _sort_sign(idx)
            if key is None:
                continue
            clean.setdefault(key, []).append(raw_mul(sign, c))
        clean = {k: simplify(raw_add(v)) for k, v in sorted(clean.items())}
        object.__setattr__(self, "coeffs", {k: v for k, v in clean.items() if v != 0})

    @property
    def source(self) -> Chart:
        return self.base.source

    @property
    def target(self) -> Chart:
        return self.base.target

    def __getitem__(self, idx) -> Expr:
        sign, key = _sort_sign(idx)
        if key is None:
            return ZERO
        return sign * self.coeffs.get(key, ZERO)

    def __eq__(self, other):
        return (isinstance(other, FormAlongMap) and self.base == other.base
                and self.degree == other.degree and self.coeffs == other.coeffs)

    __hash__ = None

    def is_zero(self) -> bool:
        return not self.coeffs

    def _check(self, other):
        if self.base != other.base or self.degree != other.degree:
            raise ChartMismatch("forms differ in base map or degree")

    def __add__(self, other):
        self._check(other)
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = raw_add([out.get(k, ZERO), v])
        return FormAlongMap(self.base, self.degree, out)

    def __sub__(self, other):
        return self + other.scale(-1)

    def scale(self, f) -> "FormAlongMap":
        f = as_expr(f)
        return FormAlongMap(self.base, self.degree, {k: raw_mul(f, v) for k, v in self.coeffs.items()})

    def __neg__(self):
        return self.scale(-1)

    @property
    def scalar(self) -> Expr:
        if self.degree != 0:
            raise DegreeError("not a 0-form")
        return self.coeffs.get((), ZERO)

    def values(self) -> list[Expr]:
        return list(self.coeffs.values())

    def __str__(self):
        if self.degree == 0:
            return symcore.to_text(self.scalar)
        names = self.target.coords
        parts = [f"({symcore.to_text(c)})*" + "∧".join(f"d{names[i]}" for i in idx)
                 for idx, c in self.coeffs.items()]
        return " + ".join(parts) or "0"


def form(chart: Chart, degree: int, coeffs: Mapping | None = None) -> FormAlongMap:
    """Ordinary form on ``chart``; keys may be coordinate names or indices."""
    out = {}
    for idx, c in (coeffs or {}).items():
        if isinstance(idx, (str, int)):
            idx = (idx,)
        out[tuple(chart.index(i) if isinstance(i, str) else i for i in idx)] = c
    return FormAlongMap(identity(chart), degree, out)


def function(chart: Chart, f) -> FormAlongMap:
    return FormAlongMap(identity(chart), 0, {(): f})


def wedge(a: FormAlongMap, b: FormAlongMap) -> FormAlongMap:
    if a.base != b.base:
        raise ChartMismatch("wedge needs forms along the same map")
    if a.degree + b.degree > a.target.dim:
        return FormAlongMap(a.base, a.degree + b.degree, {})
    out = {}
    for i, ca in a.coeffs.items():
        for j, cb in b.coeffs.items():
            sign, key = _sort_sign(i + j)
            if key is None:
                continue
            out.setdefault(key, []).append(raw_mul(sign, ca, cb))
    return FormAlongMap(a.base, a.degree + b.degree, {k: raw_add(v) for k, v in out.items()})


def exterior_derivative(alpha: FormAlongMap) -> FormAlongMap:
    if not alpha.base.is_identity:
        raise NotOnIdentity("exterior derivative needs a form with identity base")
    xs = alpha.target.symbols
    out = {}
    for idx, c in alpha.coeffs.items():
        for j, x in enumerate(xs):
            d = symcore.diff(c, x)
            if d == 0:
                continue
            sign, key = _sort_sign((j,) + idx)
            if key is None:
                continue
            out.setdefault(key, []).append(raw_mul(sign, d))
    return FormAlongMap(alpha.base, alpha.degree + 1, {k: raw_add(v) for k, v in out.items()})


def _source_coeffs(omega: FormAlongMap, phi: SmoothMap) -> dict:
    """Coefficients of ``omega`` as functions on the source of ``phi``."""
    if omega.base == phi:
        return dict(omega.coeffs)
    if omega.base.is_identity and omega.target == phi.target:
        table = phi.table
        return {k: v.xreplace(table) for k, v in omega.coeffs.items()}
    raise ChartMismatch("form lives neither on the target of phi nor along phi")


def pullback(phi: SmoothMap, beta: FormAlongMap) -> FormAlongMap:
    """``phi^* beta`` for a form on the target of ``phi`` (or along ``phi``)."""
    coeffs = _source_coeffs(beta, phi)
    J = tangent_map(phi)
    p = beta.degree
    out = {}
    for B in itertools.combinations(range(phi.source.dim), p):
        out[B] = raw_add(raw_mul(c, _det([[J[i, b] for b in B] for i in I])) for I, c in coeffs.items())
    return FormAlongMap(identity(phi.source), p, out)


def contract(X: VectorFieldAlongMap, omega: FormAlongMap) -> FormAlongMap:
    """``i_X omega`` realized as a (p-1)-form on the source of ``X``'s base."""
    p = omega.degree
    if p == 0:
        raise DegreeError("cannot contract a 0-form")
    phi = X.base
    coeffs = _source_coeffs(omega, phi)
    J = tangent_map(phi) if p > 1 else None
    out = {}
    for B in itertools.combinations(range(phi.source.dim), p - 1):
        out[B] = raw_add(raw_mul(c, _det([[X.components[i]] + [J[i, b] for b in B] for i in I]))
                         for I, c in coeffs.items())
    return FormAlongMap(identity(phi.source), p - 1, out)


def lie_derivative(X: VectorFieldAlongMap, omega: FormAlongMap) -> FormAlongMap:
    """``d_X = i_X d + d i_X``; a p-form on the source of ``X``'s base."""
    if not omega.base.is_identity:
        raise NotOnIdentity("d_X needs a form on the target manifold")
    first = contract(X, exterior_derivative(omega)) if omega.degree < omega.target.dim else None
    if omega.degree == 0:
        return first if first is not None else FormAlongMap(identity(X.source), 0, {})
    second = exterior_derivative(contract(X, omega))
    return second if first is None else first + second


def pull_function(phi: SmoothMap, f) -> Expr:
    return phi.pull(f)


# --------------------------------------------------------------------------
# canonical sections


def canonical_section(bundle: Chart):
    """Section along the projection given by the identity of the bundle.

    TM gives the total time derivative ``T = v^i (d/dx^i o tau)`` and T*M the
    Liouville form ``p_i (dx^i o pi)``.
    """
    if bundle.base is None or bundle.bundle not in ("TM", "T*M"):
        raise NotABundleChart(f"{bundle.name} is not a tangent or cotangent chart")
    pi = projection(bundle)
    fibre = syms(bundle.fibre)
    if bundle.bundle == "TM":
        return VectorFieldAlongMap(pi, fibre)
    return FormAlongMap(pi, 1, {(i,): p for i, p in enumerate(fibre)})


# --------------------------------------------------------------------------
# numeric comparison helpers


def form_residual(a: FormAlongMap, b: FormAlongMap, rng: np.random.Generator, n: int = 20) -> float:
    a._check(b)
    keys = set(a.coeffs) | set(b.coeffs)
    return symcore.max_abs([a.coeffs.get(k, ZERO) - b.coeffs.get(k, ZERO) for k in keys], rng, n)


def field_residual(a: VectorFieldAlongMap, b: VectorFieldAlongMap, rng: np.random.Generator, n: int = 20) -> float:
    a._check(b)
    return symcore.max_abs([x - y for x, y in zip(a.components, b.components)], rng, n)
