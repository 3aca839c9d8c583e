"""Constraint algorithm for ``i_Gamma (phi^* omega) = alpha``.

Constraints are kept in triangular form: each one is solved for a single
coordinate, and "modulo the constraints" means substituting those solutions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from . import symcore
from .errors import NotClosed, RankNotConstant, ReductionFailure
from .geometry import (
    FormAlongMap,
    SmoothMap,
    VectorFieldAlongMap,
    act,
    contract,
    exterior_derivative,
    function,
    pullback,
    tangent_map,
    vector_field,
)
from .lagrangian import LagrangianSystem, evolution_operator, kl_apply, primary_constraints
from .symcore import Expr, LinearSystem, as_expr, normalize_constraint, simplify, solve_linear

ZERO = sp.Integer(0)
STABILIZED = "stabilized"
EMPTY = "empty_final_set"
MAX_ITER = "max_iterations"


@dataclass(frozen=True, eq=False)
class PresymplecticProblem:
    phi: SmoothMap
    omega: FormAlongMap
    alpha: FormAlongMap

    def __post_init__(self):
        if self.omega.degree != 2 or not self.omega.base.is_identity or self.omega.target != self.phi.target:
            raise ValueError("omega must be a 2-form on the target of phi")
        if self.alpha.degree != 1 or not self.alpha.base.is_identity or self.alpha.target != self.phi.source:
            raise ValueError("alpha must be a 1-form on the source of phi")
        if not exterior_derivative(self.omega).is_zero():
            raise NotClosed("omega is not closed")

    @property
    def P(self):
        return self.phi.source

    @property
    def pulled(self) -> FormAlongMap:
        return pullback(self.phi, self.omega)


def _matrix(omega: FormAlongMap) -> sp.Matrix:
    n = omega.target.dim
    return sp.Matrix(n, n, lambda i, j: omega[(i, j)])


def _check_rank(M: sp.Matrix, names, rng: np.random.Generator, what: str) -> int:
    flat = list(M)
    if all(e == 0 for e in flat):
        return 0
    vals = symcore.probe_values(flat, rng, 10, names=names)
    ranks = {np.linalg.matrix_rank(row.reshape(M.shape), tol=1e-9 * max(1.0, np.max(np.abs(row))))
             for row in vals}
    if len(ranks) != 1:
        raise RankNotConstant(f"rank of {what} varies over probe points: {sorted(ranks)}")
    return ranks.pop()


def existence_constraints(prob: PresymplecticProblem, rng: np.random.Generator | None = None) -> list[Expr]:
    """Pairings ``<z, alpha>`` for ``z`` with ``T phi(z)`` in the radical of omega."""
    rng = symcore.default_rng(0) if rng is None else rng
    P = prob.P
    J = sp.Matrix(tangent_map(prob.phi))
    W = _matrix(prob.omega).xreplace(prob.phi.table)
    K = W * J if any(e != 0 for e in W) else sp.zeros(W.shape[0], P.dim)
    unknowns = tuple(f"__z{i}" for i in range(P.dim))
    zs = symcore.syms(unknowns)
    eqs = [simplify(sum((K[i, j] * zs[j] for j in range(P.dim)), ZERO)) for i in range(K.shape[0])]
    sol = solve_linear(LinearSystem(unknowns, eqs), rng)
    rank = _check_rank(K, P.coords, rng, "the kernel system")
    if P.dim - rank != len(sol.free):
        raise RankNotConstant("symbolic kernel dimension differs from the numeric one")
    out = []
    for f in sol.free:
        basis = {u: sp.Integer(1 if u.name == f else 0) for u in zs if u.name in sol.free}
        z = [basis[u] if u.name in sol.free else sol.solution[u.name].xreplace(basis) for u in zs]
        pairing = simplify(sum((c * prob.alpha[(j,)] for j, c in enumerate(z)), ZERO))
        if pairing != 0:
            out.append(pairing)
    return out


class Reducer:
    """Triangular substitution ``coordinate -> expression in the remaining coordinates``."""

    def __init__(self, coords, rng: np.random.Generator):
        self.coords = symcore.syms(coords)
        self.rng = rng
        self.table: dict[sp.Symbol, Expr] = {}

    def reduce(self, e) -> Expr:
        e = as_expr(e)
        if not self.table:
            return simplify(e)
        return simplify(e.xreplace(self.table))

    def add(self, chi: Expr) -> Expr:
        """Record ``chi = 0`` (already reduced); returns the eliminated coordinate."""
        best = None
        for idx, x in enumerate(self.coords):
            if x in self.table or not chi.has(x):
                continue
            a = simplify(symcore.diff(chi, x))
            if a.has(x) or symcore.certify(a, self.rng) != "nonzero":
                continue
            key = (0 if a.is_Number else 1 if symcore.is_monomial(a) else 2, -idx)
            if best is None or key < best[0]:
                best = (key, x, a)
        if best is None:
            raise ReductionFailure(f"constraint {symcore.to_text(chi)} is not solvable for a single coordinate")
        _, x, a = best
        value = simplify(-chi.xreplace({x: ZERO}) / a)
        self.table = {k: simplify(v.xreplace({x: value})) for k, v in self.table.items()}
        self.table[x] = value
        return x

    def points(self, n: int, rng: np.random.Generator) -> list[dict[str, float]]:
        """Random points satisfying every recorded constraint."""
        free = [x.name for x in self.coords if x not in self.table]
        out = []
        for _ in range(20):
            for p in symcore.sample_points(free, n - len(out), rng):
                try:
                    full = dict(p)
                    for x, v in self.table.items():
                        full[x.name] = symcore.evaluate(v, p)
                    out.append(full)
                except symcore.DomainError:
                    continue
            if len(out) == n:
                return out
        raise symcore.DomainError("no points found on the constraint set")


@dataclass
class ConstraintChain:
    generations: list[list[Expr]]
    status: str
    gamma: VectorFieldAlongMap | None
    parameters: tuple[str, ...]
    reduction: dict = field(default_factory=dict)
    cross_report: list[dict] = field(default_factory=list)

    @property
    def constraints(self) -> list[Expr]:
        return [c for g in self.generations for c in g]


def _new_generation(candidates, reducer: Reducer, rng) -> tuple[list[Expr], bool]:
    """Reduce candidates; keep the independent ones. Second value flags inconsistency."""
    gen = []
    for c in candidates:
        c = reducer.reduce(c)
        if c == 0 or symcore.certify(c, rng, monomials=False) == "zero":
            continue
        c = normalize_constraint(c)
        if c.is_Number:
            return [c], True
        reducer.add(c)
        gen.append(c)
    return gen, False


def run_chain(prob: PresymplecticProblem, max_iter: int = 10, rng: np.random.Generator | None = None) -> ConstraintChain:
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    rng = symcore.default_rng(0) if rng is None else rng
    P = prob.P
    pulled = prob.pulled
    _check_rank(_matrix(pulled), P.coords, rng, "the pulled-back form")
    _check_rank(sp.Matrix(tangent_map(prob.phi)), P.coords, rng, "the Jacobian of phi")

    unknowns = tuple(f"__g{i}" for i in range(P.dim))
    trial = vector_field(P, symcore.syms(unknowns))
    lhs = contract(trial, pulled)
    base_eqs = [lhs[(j,)] - prob.alpha[(j,)] for j in range(P.dim)]

    reducer = Reducer(P.coords, rng)
    generations: list[list[Expr]] = []
    for _ in range(max_iter):
        eqs = [reducer.reduce(e) for e in base_eqs]
        sol = solve_linear(LinearSystem(unknowns, eqs), rng)
        gen, empty = _new_generation(sol.conditions, reducer, rng)
        if empty:
            generations.append(gen)
            return ConstraintChain(generations, EMPTY, None, (), dict(reducer.table))
        if gen:
            generations.append(gen)
            continue

        mus = tuple(f"mu_{k}" for k in range(len(sol.free)))
        rename = {symcore.sym(f): symcore.sym(m) for f, m in zip(sol.free, mus)}
        comps = [rename[symcore.sym(u)] if u in sol.free else sol.solution[u].xreplace(rename) for u in unknowns]
        gamma = vector_field(P, [reducer.reduce(c) for c in comps])
        tangency = [reducer.reduce(act(gamma, chi)) for chi in (c for g in generations for c in g)]
        tsol = solve_linear(LinearSystem(mus, tangency), rng)
        gen, empty = _new_generation(tsol.conditions, reducer, rng)
        if empty:
            generations.append(gen)
            return ConstraintChain(generations, EMPTY, None, (), dict(reducer.table))
        if gen:
            generations.append(gen)
            continue
        fixed = {symcore.sym(m): v for m, v in tsol.solution.items()}
        remaining = tuple(m for m in mus if m in tsol.free)
        renumber = {symcore.sym(m): symcore.sym(f"mu_{k}") for k, m in enumerate(remaining)}
        final = [reducer.reduce(c.xreplace(fixed).xreplace(renumber)) for c in gamma.components]
        params = tuple(f"mu_{k}" for k in range(len(remaining)))
        return ConstraintChain(generations, STABILIZED, vector_field(P, final), params, dict(reducer.table))
    return ConstraintChain(generations, MAX_ITER, None, (), dict(reducer.table))


def soundness_residual(prob: PresymplecticProblem, chain: ConstraintChain, rng: np.random.Generator,
                       n: int = 20) -> float:
    """Max of ``i_Gamma(phi^* omega) - alpha`` at points on the final constraint set.

    Free parameters are drawn at random along with the free coordinates.
    """
    reducer = Reducer(prob.P.coords, rng)
    reducer.table = {symcore.sym(str(k)): v for k, v in chain.reduction.items()}
    res = contract(chain.gamma, prob.pulled) - prob.alpha
    exprs = [reducer.reduce(e) for e in res.values()]
    exprs = [e for e in exprs if e != 0]
    if not exprs:
        return 0.0
    pts = reducer.points(n, rng)
    params = symcore.sample_points(chain.parameters, n, rng) if chain.parameters else [{}] * n
    names = sorted({s for e in exprs for s in symcore.symbol_names(e)})
    f = symcore.compile_exprs(exprs, names)
    worst = 0.0
    for p, m in zip(pts, params):
        env = p | m
        worst = max(worst, max(abs(v) for v in f(*(env[k] for k in names))))
    return worst


def lagrangian_problem(sys: LagrangianSystem) -> PresymplecticProblem:
    tc = sys.chart
    alpha = exterior_derivative(function(tc.TQ, sys.energy))
    return PresymplecticProblem(sys.legendre.FL, sys.omega0, alpha)


def lagrangian_chain(sys: LagrangianSystem, max_iter: int = 10,
                     rng: np.random.Generator | None = None) -> ConstraintChain:
    """Chain for ``phi = FL`` with the canonical form on T*Q and ``alpha = dE_L``.

    The cross report lists, for each primary constraint ``zeta`` on T*Q,
    ``FL^* zeta``, ``K_L(zeta)`` and whether the latter is a chain constraint.
    """
    rng = symcore.default_rng(0) if rng is None else rng
    chain = run_chain(lagrangian_problem(sys), max_iter, rng)
    K = evolution_operator(sys)
    known = set(chain.constraints)
    for zeta in primary_constraints(sys, rng):
        k = simplify(kl_apply(K, zeta))
        chain.cross_report.append({
            "zeta": zeta,
            "pullback": sys.legendre.FL.pull(zeta),
            "kl": k,
            "in_chain": k != 0 and normalize_constraint(k) in known,
        })
    return chain
