"""Symmetries and constants of motion.

Two routes are implemented. For a field X on TQ the condition
``L_{X(D)} L = L_D F`` must hold for every SODE D; D is represented by
fresh force symbols so the quantifier reduces to coefficient matching.
For a field X along tau the condition is ``X^(1) L = T^(1) F`` on T^2Q,
matched coefficient-wise in the accelerations.

The two routes report constants with opposite sign conventions:
``G = i_X theta_L - F`` for fields on TQ and ``G = F - theta_L(X)`` for
fields along tau. Both are kept as stated; ``G_tq + G_tau`` is constant.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from . import symcore
from .dynamics import integrate_sode
from .errors import CannotIntegrate, NotAConstant, SingularLagrangian, VerificationFailure
from .geometry import (
    VectorFieldAlongMap,
    act,
    contract,
    exterior_derivative,
    function,
    lie_derivative,
    restrict,
)
from .lagrangian import LagrangianSystem, dynamics
from .symcore import Expr, LinearSystem, as_expr, simplify, solve_linear
from .tangentgeo import (
    newtonoid_project,
    project_to_tau,
    prolong,
    section_of_sode,
    total_derivative_T1,
)

ZERO = sp.Integer(0)
SYMMETRY = "symmetry"
NOT_SYMMETRY = "not_symmetry"


@dataclass(frozen=True)
class SymmetryCandidate:
    X: VectorFieldAlongMap
    F: Expr | None = None


@dataclass
class NoetherResult:
    verdict: str
    F: Expr
    G: Expr | None
    kind: str
    residuals: dict = field(default_factory=dict)

    @property
    def is_symmetry(self) -> bool:
        return self.verdict == SYMMETRY


def _require_regular(sys: LagrangianSystem):
    if sys.regular != "yes":
        raise SingularLagrangian("Noether analysis needs a regular Lagrangian")


def _affine_match(diff: Expr, params, rng: np.random.Generator) -> tuple[bool, list[Expr]]:
    """Does an expression affine in ``params`` vanish identically?"""
    zero = {p: ZERO for p in params}
    parts = [simplify(symcore.diff(diff, p)) for p in params] + [simplify(diff.xreplace(zero))]
    nonzero = [e for e in parts if e != 0]
    if not nonzero:
        return True, parts
    return symcore.numerically_zero(nonzero, rng, 20, 1e-9), parts


def check_thm1(sys: LagrangianSystem, X: VectorFieldAlongMap, F=0,
               rng: np.random.Generator | None = None) -> NoetherResult:
    """Symmetry test for a field on TQ against a generic SODE."""
    _require_regular(sys)
    rng = symcore.default_rng(0) if rng is None else rng
    tc = sys.chart
    F = simplify(as_expr(F))
    d = symcore.syms(f"__d{i}" for i in range(tc.n))
    D = tc.tq_field(list(tc.v) + list(d))
    XD = newtonoid_project(tc, X, D)
    lhs = act(XD, sys.L)
    rhs = act(D, F)
    ok, parts = _affine_match(simplify(lhs - rhs), d, rng)
    if not ok:
        return NoetherResult(NOT_SYMMETRY, F, None, "on_TQ", {"mismatch": parts})

    G = simplify(contract(X, sys.theta).scalar - F)
    Gamma = dynamics(sys, rng)
    XG = newtonoid_project(tc, X, Gamma)
    residuals = {
        "conservation": symcore.max_abs([act(Gamma.field, G)], rng),
        "omega_invariance": symcore.max_abs(lie_derivative(XG, sys.omega).values(), rng),
        "energy_invariance": symcore.max_abs([act(XG, sys.energy)], rng),
    }
    if max(residuals.values()) > 1e-9:
        raise VerificationFailure(f"symmetry consequences fail: {residuals}")
    return NoetherResult(SYMMETRY, F, G, "on_TQ", residuals)


def check_thm2(sys: LagrangianSystem, X: VectorFieldAlongMap, F=0,
               rng: np.random.Generator | None = None) -> NoetherResult:
    """Symmetry test ``X^(1) L = T^(1) F`` for a field along tau."""
    _require_regular(sys)
    rng = symcore.default_rng(0) if rng is None else rng
    tc = sys.chart
    F = simplify(as_expr(F))
    X1 = prolong(tc, X)
    lhs = act(X1, sys.L)
    rhs = act(total_derivative_T1(tc), F)
    ok, parts = _affine_match(simplify(lhs - rhs), tc.a, rng)
    if not ok:
        return NoetherResult(NOT_SYMMETRY, F, None, "along_tau", {"mismatch": parts})

    if X.base.is_identity:
        X = restrict(X, tc.tau)
    G = simplify(F - contract(X, sys.legendre.theta_hat).scalar)
    Gamma = dynamics(sys, rng)
    gamma = section_of_sode(Gamma)
    # X^(1) o gamma must be the Newtonoid projection along Gamma of any field lifting X
    induced = tc.tq_field([gamma.pull(c) for c in X1.components])
    lift = tc.tq_field(list(X.components) + [ZERO] * tc.n)
    residuals = {
        "conservation": symcore.max_abs([act(Gamma.field, G)], rng),
        "newtonoid": symcore.max_abs(
            [a - b for a, b in zip(induced.components, newtonoid_project(tc, lift, Gamma).components)], rng),
    }
    if max(residuals.values()) > 1e-9:
        raise VerificationFailure(f"symmetry consequences fail: {residuals}")
    return NoetherResult(SYMMETRY, F, G, "along_tau", residuals)


def _antiderivative(e: Expr, x: sp.Symbol) -> Expr:
    """Term-by-term power rule; raises CannotIntegrate unless ``e`` is polynomial in ``x``."""
    e = simplify(e)
    if e == 0:
        return ZERO
    try:
        poly = sp.Poly(e, x)
    except sp.PolynomialError:
        raise CannotIntegrate(f"{symcore.to_text(e)} is not polynomial in {x}") from None
    if any(c.has(x) for c in poly.coeffs()):
        raise CannotIntegrate(f"{symcore.to_text(e)} is not polynomial in {x}")
    total = ZERO
    for (k,), c in poly.terms():
        total += c * x ** (k + 1) / (k + 1)
    return simplify(total)


def derive_F(sys: LagrangianSystem, X: VectorFieldAlongMap) -> Expr:
    """Gauge function F with ``X^(1) L = T^(1) F`` when elementary integration suffices.

    F is built velocity-wise from the acceleration coefficients, then the
    remaining ``v``-linear part is integrated in the positions. Anything beyond
    polynomial antiderivatives raises CannotIntegrate.
    """
    tc = sys.chart
    lhs = simplify(act(prolong(tc, X), sys.L))
    coeffs = [simplify(symcore.diff(lhs, a)) for a in tc.a]
    rest = simplify(lhs.xreplace({a: ZERO for a in tc.a}))

    F = ZERO
    for v, c in zip(tc.v, coeffs):
        remaining = simplify(c - symcore.diff(F, v))
        F = simplify(F + _antiderivative(remaining, v))
    for v, c in zip(tc.v, coeffs):
        if simplify(symcore.diff(F, v) - c) != 0:
            raise CannotIntegrate("acceleration coefficients are not a velocity gradient")

    # sum_i v^i dh/dq^i must equal the leftover, for some h(q)
    left = simplify(rest - sum((v * symcore.diff(F, q) for q, v in zip(tc.q, tc.v)), ZERO))
    h = ZERO
    for q, v in zip(tc.q, tc.v):
        part = simplify(symcore.diff(left, v))
        if part.free_symbols & set(tc.v):
            raise CannotIntegrate("position part is not linear in the velocities")
        remaining = simplify(part - symcore.diff(h, q))
        h = simplify(h + _antiderivative(remaining, q))
    F = simplify(F + h)
    check = simplify(act(total_derivative_T1(tc), F) - lhs)
    if check != 0:
        raise CannotIntegrate("no elementary gauge function found")
    return F


def symmetry_from_constant(sys: LagrangianSystem, G, rng: np.random.Generator | None = None) -> SymmetryCandidate:
    """Field along tau and gauge term whose Noether constant is ``G``.

    Solves ``i_Y omega_L = -dG`` for Y on TQ; with this orientation the
    constant ``F - theta_L(X)`` of ``X = T tau o Y`` reproduces ``G``.
    """
    _require_regular(sys)
    rng = symcore.default_rng(0) if rng is None else rng
    tc = sys.chart
    G = simplify(as_expr(G))
    Gamma = dynamics(sys, rng)
    if not symcore.numerically_zero([act(Gamma.field, G)], rng, 20, 1e-9):
        raise NotAConstant(f"{symcore.to_text(G)} is not conserved along the dynamics")
    unknowns = tuple(f"__y{i}" for i in range(tc.TQ.dim))
    Y = tc.tq_field(symcore.syms(unknowns))
    lhs = contract(Y, sys.omega)
    dG = exterior_derivative(function(tc.TQ, G))
    eqs = [lhs[(j,)] + dG[(j,)] for j in range(tc.TQ.dim)]
    sol = solve_linear(LinearSystem(unknowns, eqs), rng)
    if sol.free or sol.conditions:
        raise SingularLagrangian("omega_L is degenerate")
    Y = tc.tq_field([sol.solution[u] for u in unknowns])
    X = project_to_tau(tc, Y)
    F = simplify(G + contract(X, sys.legendre.theta_hat).scalar)
    result = check_thm2(sys, X, F, rng)
    if not result.is_symmetry:
        raise VerificationFailure("reconstructed symmetry fails the prolongation test")
    return SymmetryCandidate(X, F)


def verify_numeric(sys: LagrangianSystem, G, n_trajectories: int = 3, T: float = 10.0, h: float = 1e-3,
                   rng: np.random.Generator | None = None, workers: int = 1) -> float:
    """Max drift ``|G(t) - G(0)|`` along RK4 trajectories from random starts."""
    _require_regular(sys)
    rng = symcore.default_rng(0) if rng is None else rng
    tc = sys.chart
    Gamma = dynamics(sys, rng)
    names = tc.TQ.coords
    g = symcore.compile_exprs([as_expr(G)], names)
    starts = [[p[k] for k in names] for p in symcore.sample_points(names, n_trajectories, rng)]

    def drift(x0):
        curve = integrate_sode(Gamma, x0, T, h)
        g0 = g(*curve.states[0])[0]
        return max(abs(g(*s)[0] - g0) for s in curve.states)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            drifts = list(pool.map(drift, starts))
    else:
        drifts = [drift(x0) for x0 in starts]
    return max(drifts)


def round_trip(sys: LagrangianSystem, G, rng: np.random.Generator | None = None) -> tuple[SymmetryCandidate, Expr, float]:
    """Rebuild a symmetry from ``G`` and recompute its constant ``G'``.

    Returns the candidate, ``G'`` and the spread of ``G - G'`` over random
    points (zero when they agree up to an additive constant).
    """
    rng = symcore.default_rng(0) if rng is None else rng
    cand = symmetry_from_constant(sys, G, rng)
    G2 = check_thm2(sys, cand.X, cand.F, rng).G
    delta = simplify(as_expr(G) - G2)
    if delta.is_Number:
        return cand, G2, 0.0
    vals = symcore.probe_values([delta], rng, 20)[:, 0]
    return cand, G2, float(np.max(vals) - np.min(vals))
