"""Structures special to TQ and T^2Q.

Liouville field, vertical endomorphism, vertical and complete lifts, SODE
fields and sections, point transformations, the Newtonoid projection, the
total time derivative T^(1) along tau_{2,1} and first prolongations.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import sympy as sp

from . import symcore
from .errors import ChartMismatch, NotASODE
from .geometry import (
    Chart,
    SmoothMap,
    VectorFieldAlongMap,
    act,
    canonical_section,
    cotangent_chart,
    lie_bracket,
    projection,
    promote,
    restrict,
    tangent_chart,
    tangent_map,
    vector_field,
)
from .symcore import Expr, as_expr, simplify, syms

ZERO = sp.Integer(0)


@dataclass(frozen=True)
class TangentChart:
    """Natural charts (q), (q, v), (q, v, a) and (q, p) built from one base chart."""

    Q: Chart
    TQ: Chart
    T2Q: Chart
    TstarQ: Chart

    @classmethod
    def from_base(cls, coords: Sequence[str], velocities: Sequence[str] | None = None,
                  accelerations: Sequence[str] | None = None, momenta: Sequence[str] | None = None,
                  name: str = "Q") -> "TangentChart":
        Q = Chart(name, tuple(coords))
        TQ = tangent_chart(Q, velocities)
        acc = tuple(accelerations) if accelerations else tuple(f"a_{c}" for c in Q.coords)
        T2Q = Chart(f"T2{name}", TQ.coords + acc, "T2M", TQ)
        if len({*T2Q.coords}) != len(T2Q.coords):
            raise ValueError("coordinate names clash between q, v and a")
        return cls(Q, TQ, T2Q, cotangent_chart(Q, momenta))

    @property
    def n(self) -> int:
        return self.Q.dim

    @property
    def q(self) -> tuple[sp.Symbol, ...]:
        return self.Q.symbols

    @property
    def v(self) -> tuple[sp.Symbol, ...]:
        return syms(self.TQ.fibre)

    @property
    def a(self) -> tuple[sp.Symbol, ...]:
        return syms(self.T2Q.fibre)

    @property
    def p(self) -> tuple[sp.Symbol, ...]:
        return syms(self.TstarQ.fibre)

    @property
    def tau(self) -> SmoothMap:
        return projection(self.TQ)

    @property
    def tau21(self) -> SmoothMap:
        return projection(self.T2Q)

    @property
    def tau20(self) -> SmoothMap:
        return SmoothMap(self.T2Q, self.Q, self.q)

    @property
    def pi(self) -> SmoothMap:
        return projection(self.TstarQ)

    def tq_field(self, components: Sequence) -> VectorFieldAlongMap:
        return vector_field(self.TQ, components)


def total_derivative(tc: TangentChart) -> VectorFieldAlongMap:
    """``T = v^i (d/dq^i o tau)``, the canonical section of TQ."""
    return canonical_section(tc.TQ)


def liouville(tc: TangentChart) -> VectorFieldAlongMap:
    delta = tc.tq_field([ZERO] * tc.n + list(tc.v))
    if delta != vertical_lift_field(tc, total_derivative(tc)):
        raise AssertionError("Liouville field disagrees with the vertical lift of T")
    return delta


def _split(tc: TangentChart, Y: VectorFieldAlongMap) -> tuple[tuple, tuple]:
    if Y.target != tc.TQ:
        raise ChartMismatch("expected a field with values in T(TQ)")
    return Y.components[: tc.n], Y.components[tc.n:]


def vertical_endomorphism(tc: TangentChart, Y: VectorFieldAlongMap) -> VectorFieldAlongMap:
    """S(Y): the d/dq components move to the d/dv slots."""
    eta, _ = _split(tc, Y)
    return VectorFieldAlongMap(Y.base, (ZERO,) * tc.n + tuple(eta))


def vertical_lift_fn(tc: TangentChart, f) -> Expr:
    """``f^V = d_T f``."""
    return act(total_derivative(tc), f)


def vertical_lift_field(tc: TangentChart, X: VectorFieldAlongMap) -> VectorFieldAlongMap:
    """``X^V = X^i d/dv^i`` for ``X`` along tau (fields on Q are restricted first)."""
    if X.base.is_identity and X.target == tc.Q:
        X = restrict(X, tc.tau)
    if X.base != tc.tau:
        raise ChartMismatch("vertical lift needs a field along tau: TQ -> Q")
    return tc.tq_field((ZERO,) * tc.n + tuple(X.components))


def check_vertical_lift(tc: TangentChart, X: VectorFieldAlongMap, rng: np.random.Generator,
                        trials: int = 5) -> float:
    """Max residual of ``X^V(f^V) = X(f)`` over random functions ``f`` on Q."""
    XV = vertical_lift_field(tc, X)
    if X.base.is_identity:
        X = restrict(X, tc.tau)
    worst = 0.0
    for _ in range(trials):
        f = symcore.random_expr(tc.Q.coords, rng)
        r = act(XV, vertical_lift_fn(tc, f)) - act(X, f)
        worst = max(worst, symcore.max_abs([r], rng))
    return worst


def complete_lift(tc: TangentChart, Y: VectorFieldAlongMap) -> VectorFieldAlongMap:
    """``Y^c = Y^i d/dq^i + v^j (dY^i/dq^j) d/dv^i``."""
    if not Y.base.is_identity or Y.target != tc.Q:
        raise ChartMismatch("complete lift needs a field on Q")
    v = tc.v
    lifted = [simplify(sum((vj * symcore.diff(c, qj) for vj, qj in zip(v, tc.q)), ZERO))
              for c in Y.components]
    return tc.tq_field(list(Y.components) + lifted)


def is_sode(tc: TangentChart, X: VectorFieldAlongMap) -> bool:
    if not X.base.is_identity or X.target != tc.TQ:
        return False
    return tuple(simplify(c) for c in X.components[: tc.n]) == tc.v


@dataclass(frozen=True)
class SODEField:
    """``v^i d/dq^i + f^i d/dv^i``; the first block is the velocities by construction."""

    chart: TangentChart
    forces: tuple[Expr, ...]

    def __post_init__(self):
        object.__setattr__(self, "forces", tuple(simplify(as_expr(f)) for f in self.forces))
        if len(self.forces) != self.chart.n:
            raise ChartMismatch("one force component per coordinate")

    @property
    def field(self) -> VectorFieldAlongMap:
        return self.chart.tq_field(list(self.chart.v) + list(self.forces))

    @classmethod
    def from_field(cls, tc: TangentChart, X: VectorFieldAlongMap) -> "SODEField":
        if not is_sode(tc, X):
            raise NotASODE(f"not a second-order field: {X}")
        return cls(tc, X.components[tc.n:])


@dataclass(frozen=True)
class SODESection:
    """``gamma: (q, v) -> (q, v, F(q, v))``, a section of tau_{2,1}."""

    chart: TangentChart
    accelerations: tuple[Expr, ...]

    def __post_init__(self):
        object.__setattr__(self, "accelerations", tuple(simplify(as_expr(f)) for f in self.accelerations))

    @property
    def map(self) -> SmoothMap:
        tc = self.chart
        return SmoothMap(tc.TQ, tc.T2Q, tc.q + tc.v + self.accelerations)

    def pull(self, g) -> Expr:
        """``gamma^* g`` for ``g`` on T^2Q."""
        return self.map.pull(g)


def sode_of_section(gamma: SODESection) -> SODEField:
    tc = gamma.chart
    comps = [gamma.pull(c) for c in total_derivative_T1(tc).components]
    return SODEField.from_field(tc, tc.tq_field(comps))


def section_of_sode(Gamma: SODEField) -> SODESection:
    return SODESection(Gamma.chart, Gamma.forces)


def is_point_transformation(tc: TangentChart, Phi: SmoothMap, rng: np.random.Generator | None = None,
                            tol: float = 1e-9) -> bool:
    """``[T Phi, S] = 0`` and ``T Phi (Delta) = Delta`` at 20 random points."""
    if Phi.source != tc.TQ or Phi.target != tc.TQ:
        raise ChartMismatch("point transformations map TQ to itself")
    rng = symcore.default_rng(0) if rng is None else rng
    n = tc.n
    J = tangent_map(Phi)
    S = sp.zeros(2 * n, 2 * n)
    for i in range(n):
        S[n + i, i] = 1
    commutator = list(J * S - S * J)
    delta = sp.Matrix([0] * n + list(tc.v))
    pushed = J * delta
    transported = delta.xreplace(Phi.table)
    residuals = commutator + list(pushed - transported)
    return symcore.numerically_zero([simplify(r) for r in residuals], rng, 20, tol)


def tangent_lift_map(tc: TangentChart, phi_components: Sequence) -> SmoothMap:
    """``T phi`` for ``phi: Q -> Q`` given by its components."""
    comps = [as_expr(c) for c in phi_components]
    vel = [simplify(sum((symcore.diff(c, qj) * vj for qj, vj in zip(tc.q, tc.v)), ZERO)) for c in comps]
    return SmoothMap(tc.TQ, tc.TQ, tuple(comps + vel))


def newtonoid_project(tc: TangentChart, X: VectorFieldAlongMap, D) -> VectorFieldAlongMap:
    """``X(D) = eta^i d/dq^i + (D eta^i) d/dv^i``."""
    if isinstance(D, SODEField):
        D = D.field
    elif not is_sode(tc, D):
        raise NotASODE("projection needs a SODE")
    eta, _ = _split(tc, X)
    return tc.tq_field(list(eta) + [act(D, e) for e in eta])


def newtonoid_project_bracket(tc: TangentChart, X: VectorFieldAlongMap, D) -> VectorFieldAlongMap:
    """Same projection computed as ``X + S([D, X])``."""
    if isinstance(D, SODEField):
        D = D.field
    return X + vertical_endomorphism(tc, lie_bracket(D, X))


def total_derivative_T1(tc: TangentChart) -> VectorFieldAlongMap:
    """``T^(1) = v^i (d/dq^i o tau21) + a^i (d/dv^i o tau21)``."""
    return VectorFieldAlongMap(tc.tau21, tc.v + tc.a)


def prolong(tc: TangentChart, X: VectorFieldAlongMap) -> VectorFieldAlongMap:
    """``X^(1) = eta^i (d/dq^i o tau21) + (T^(1) eta^i)(d/dv^i o tau21)``."""
    if X.base.is_identity and X.target == tc.Q:
        X = restrict(X, tc.tau)
    if X.base != tc.tau:
        raise ChartMismatch("prolongation needs a field along tau")
    T1 = total_derivative_T1(tc)
    return VectorFieldAlongMap(tc.tau21, tuple(X.components) + tuple(act(T1, e) for e in X.components))


def along_tau(tc: TangentChart, components: Sequence) -> VectorFieldAlongMap:
    return VectorFieldAlongMap(tc.tau, tuple(as_expr(c) for c in components))


def project_to_tau(tc: TangentChart, X: VectorFieldAlongMap) -> VectorFieldAlongMap:
    """``T tau o X`` for a field on TQ."""
    return promote(X, tc.tau)
