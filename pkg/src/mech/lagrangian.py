"""Lagrangian systems on TQ.

Cartan forms, energy, regularity, Euler-Lagrange dynamics, the Legendre map
seen as a 1-form along tau, and the evolution operator K_L along FL.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from . import symcore
from .errors import NotPointTransformation, NotASODE, SingularLagrangian
from .geometry import (
    FormAlongMap,
    SmoothMap,
    VectorFieldAlongMap,
    act,
    contract,
    exterior_derivative,
    form,
    form_residual,
    function,
    identity,
    pullback,
)
from .symcore import Expr, LinearSystem, as_expr, simplify, solve_linear
from .tangentgeo import (
    SODEField,
    TangentChart,
    is_point_transformation,
    liouville,
    total_derivative,
    vertical_endomorphism,
)

ZERO = sp.Integer(0)


@dataclass(frozen=True)
class LegendreData:
    FL: SmoothMap
    theta_hat: FormAlongMap


@dataclass(frozen=True, eq=False)
class LagrangianSystem:
    chart: TangentChart
    L: Expr
    theta: FormAlongMap
    omega: FormAlongMap
    energy: Expr
    hessian: sp.ImmutableMatrix
    regular: str
    legendre: LegendreData
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def omega0(self) -> FormAlongMap:
        """Canonical symplectic form ``dq^i ^ dp_i`` on T*Q."""
        tc = self.chart
        return form(tc.TstarQ, 2, {(i, tc.n + i): 1 for i in range(tc.n)})


def _theta(tc: TangentChart, L: Expr) -> FormAlongMap:
    # dL o S: evaluate dL on S(e_j) for every coordinate direction e_j of TQ
    coeffs = {}
    for j in range(tc.TQ.dim):
        e = [ZERO] * tc.TQ.dim
        e[j] = sp.Integer(1)
        coeffs[(j,)] = act(vertical_endomorphism(tc, tc.tq_field(e)), L)
    return FormAlongMap(identity(tc.TQ), 1, coeffs)


def regularity(hessian: sp.Matrix, rng: np.random.Generator) -> str:
    det = simplify(hessian.det(method="berkowitz"))
    status = symcore.certify(det, rng, monomials=False)
    return {"nonzero": "yes", "zero": "no", "undecided": "undecided"}[status]


def build(L, tc: TangentChart, rng: np.random.Generator | None = None) -> LagrangianSystem:
    rng = symcore.default_rng(0) if rng is None else rng
    L = simplify(as_expr(L))
    extra = L.free_symbols - set(tc.TQ.symbols)
    if extra:
        raise ValueError(f"Lagrangian uses symbols outside the chart: {sorted(map(str, extra))}")
    theta = _theta(tc, L)
    omega = exterior_derivative(theta).scale(-1)
    energy = simplify(act(liouville(tc), L) - L)
    hessian = sp.ImmutableMatrix([[simplify(symcore.diff(symcore.diff(L, vi), vj)) for vj in tc.v] for vi in tc.v])
    momenta = tuple(simplify(symcore.diff(L, vi)) for vi in tc.v)
    FL = SmoothMap(tc.TQ, tc.TstarQ, tc.q + momenta)
    theta_hat = FormAlongMap(tc.tau, 1, {(i,): m for i, m in enumerate(momenta)})
    return LagrangianSystem(tc, L, theta, omega, energy, hessian, regularity(hessian, rng),
                            LegendreData(FL, theta_hat))


def dynamics(sys: LagrangianSystem, rng: np.random.Generator | None = None) -> SODEField:
    """The unique Gamma with ``i_Gamma omega_L = dE_L``; checked to be a SODE."""
    if sys.regular != "yes":
        raise SingularLagrangian(f"Lagrangian is not certifiably regular (regular={sys.regular})")
    if "dynamics" in sys._cache:
        return sys._cache["dynamics"]
    tc = sys.chart
    unknowns = tuple(f"__g{i}" for i in range(tc.TQ.dim))
    Gamma = tc.tq_field(symcore.syms(unknowns))
    lhs = contract(Gamma, sys.omega)
    dE = exterior_derivative(function(tc.TQ, sys.energy))
    eqs = [lhs[(j,)] - dE[(j,)] for j in range(tc.TQ.dim)]
    sol = solve_linear(LinearSystem(unknowns, eqs), rng)
    if sol.free or sol.conditions:
        raise SingularLagrangian("dynamical equation is not uniquely solvable")
    field_ = tc.tq_field([sol.solution[u] for u in unknowns])
    if tuple(field_.components[: tc.n]) != tc.v:
        raise NotASODE(f"dynamics of a regular Lagrangian came out non-SODE: {field_}")
    result = SODEField.from_field(tc, field_)
    sys._cache["dynamics"] = result
    return result


def euler_lagrange_residual(sys: LagrangianSystem, q, v, a) -> list[float]:
    """``d/dt(dL/dv^i) - dL/dq^i`` evaluated from a state and its acceleration."""
    tc = sys.chart
    out = []
    for qi, vi in zip(tc.q, tc.v):
        p = symcore.diff(sys.L, vi)
        dt = sum((symcore.diff(p, qj) * vj + symcore.diff(p, vj) * aj
                  for qj, vj, aj in zip(tc.q, tc.v, tc.a)), ZERO)
        out.append(dt - symcore.diff(sys.L, qi))
    names = list(tc.T2Q.coords)
    f = symcore.compile_exprs(out, names)
    return list(f(*(list(q) + list(v) + list(a))))


@dataclass(frozen=True)
class PointTransformReport:
    omega_residual: float
    energy_residual: float

    @property
    def ok(self) -> bool:
        return max(self.omega_residual, self.energy_residual) <= 1e-9


def point_transform_check(sys: LagrangianSystem, Phi: SmoothMap,
                          rng: np.random.Generator | None = None) -> PointTransformReport:
    """Residuals of ``Phi^* omega_L = omega_{Phi^* L}`` and ``Phi^* E_L = E_{Phi^* L}``."""
    rng = symcore.default_rng(0) if rng is None else rng
    tc = sys.chart
    if not is_point_transformation(tc, Phi, rng):
        raise NotPointTransformation("map is not a point transformation of TQ")
    pulled = build(Phi.pull(sys.L), tc, rng)
    w = form_residual(pullback(Phi, sys.omega), pulled.omega, rng)
    e = symcore.max_abs([Phi.pull(sys.energy) - pulled.energy], rng)
    return PointTransformReport(w, e)


@dataclass(frozen=True)
class EvolutionOperator:
    """K_L as a vector field along FL: TQ -> T*Q."""

    K: VectorFieldAlongMap
    system: LagrangianSystem

    def residuals(self) -> dict[str, list[Expr]]:
        """Symbolic residuals of the two determining equations (all zero when correct)."""
        sys = self.system
        tc = sys.chart
        iK = contract(self.K, sys.omega0)
        dE = exterior_derivative(function(tc.TQ, sys.energy))
        omega_res = [simplify(iK[(j,)] - dE[(j,)]) for j in range(tc.TQ.dim)]
        # T pi_Q o K_L must be the identity of TQ, i.e. the canonical field T
        proj = self.K.components[: tc.n]
        tangent_res = [simplify(a - b) for a, b in zip(proj, total_derivative(tc).components)]
        return {"contraction": omega_res, "projection": tangent_res}


def evolution_operator(sys: LagrangianSystem) -> EvolutionOperator:
    """``K_L = v^i (d/dx^i o FL) + dL/dx^i (d/dp_i o FL)``."""
    tc = sys.chart
    forces = tuple(simplify(symcore.diff(sys.L, qi)) for qi in tc.q)
    return EvolutionOperator(VectorFieldAlongMap(sys.legendre.FL, tc.v + forces), sys)


def kl_apply(op: EvolutionOperator, zeta) -> Expr:
    """Lagrangian-side counterpart of a function on T*Q."""
    return act(op.K, zeta)


def primary_constraints(sys: LagrangianSystem, rng: np.random.Generator | None = None) -> list[Expr]:
    """Functions on T*Q vanishing on the image of FL, one per null direction of the Hessian.

    Only null directions ``z(q)`` along which ``z^i dL/dv^i`` is velocity-free
    produce a constraint ``z^i (p_i - dL/dv^i)``.
    """
    rng = symcore.default_rng(0) if rng is None else rng
    tc = sys.chart
    unknowns = tuple(f"__z{i}" for i in range(tc.n))
    zs = symcore.syms(unknowns)
    eqs = [sum((sys.hessian[i, j] * zs[j] for j in range(tc.n)), ZERO) for i in range(tc.n)]
    sol = solve_linear(LinearSystem(unknowns, eqs), rng)
    momenta = sys.legendre.FL.components[tc.n:]
    out = []
    for f in sol.free:
        z = [sp.Integer(1) if u == f else (sp.Integer(0) if u in sol.free else sol.solution[u].xreplace(
            {s: (1 if s.name == f else 0) for s in zs})) for u in unknowns]
        z = [simplify(c) for c in z]
        if any(c.free_symbols & set(tc.v) for c in z):
            continue
        pairing = simplify(sum((c * m for c, m in zip(z, momenta)), ZERO))
        if pairing.free_symbols & set(tc.v):
            continue
        zeta = simplify(sum((c * p for c, p in zip(z, tc.p)), ZERO) - pairing)
        out.append(zeta)
    return out
