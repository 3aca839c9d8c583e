"""Controllability tests and reachability by simulation."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import sympy as sp

from . import symcore
from .dynamics import ControlSignal, NumericCurve, integral_curve_along_map, rk4
from .errors import ChartMismatch, DependentGenerators, PivotUndecidable
from .geometry import Chart, SmoothMap, VectorFieldAlongMap, lie_bracket, vector_field
from .symcore import LinearSystem, solve_linear

RANK_TOL = 1e-10


def numeric_rank(M, tol: float = RANK_TOL) -> int:
    """Row reduction with partial pivoting; pivots below ``tol`` times the largest are zero."""
    A = np.array(M, dtype=float, copy=True)
    if A.size == 0:
        return 0
    scale = np.max(np.abs(A))
    if scale == 0:
        return 0
    rows, cols = A.shape
    rank = 0
    for c in range(cols):
        if rank == rows:
            break
        i = rank + int(np.argmax(np.abs(A[rank:, c])))
        if abs(A[i, c]) <= tol * scale:
            continue
        A[[rank, i]] = A[[i, rank]]
        A[rank + 1:] -= np.outer(A[rank + 1:, c] / A[rank, c], A[rank])
        rank += 1
    return rank


@dataclass(frozen=True)
class LinearControlSystem:
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.array(self.A, dtype=float))
        B = np.array(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
            raise ChartMismatch(f"incompatible shapes A{A.shape}, B{B.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class KalmanResult:
    rank: int
    controllable: bool
    matrix: np.ndarray


def kalman_rank(sys: LinearControlSystem) -> KalmanResult:
    blocks = [sys.B]
    for _ in range(sys.n - 1):
        blocks.append(sys.A @ blocks[-1])
    K = np.hstack(blocks)
    r = numeric_rank(K)
    return KalmanResult(r, r == sys.n, K)


@dataclass(frozen=True)
class DriftlessSystem:
    """``x' = u^1 X_1(x) + ... + u^r X_r(x)``."""

    chart: Chart
    generators: tuple[VectorFieldAlongMap, ...]

    def __post_init__(self):
        gens = tuple(self.generators)
        if not gens:
            raise ValueError("a driftless system needs at least one generator")
        for X in gens:
            if not X.base.is_identity or X.target != self.chart:
                raise ChartMismatch("generators must be vector fields on the system chart")
        object.__setattr__(self, "generators", gens)

    @classmethod
    def from_components(cls, chart: Chart, components: Sequence[Sequence]) -> "DriftlessSystem":
        return cls(chart, tuple(vector_field(chart, c) for c in components))

    @property
    def n(self) -> int:
        return self.chart.dim

    @property
    def r(self) -> int:
        return len(self.generators)

    def control_names(self) -> tuple[str, ...]:
        return tuple(f"u{a + 1}" for a in range(self.r))

    def total_field(self) -> VectorFieldAlongMap:
        """``u^a X_a`` as a field along the projection ``(x, u) -> x``."""
        M = self.chart
        B = Chart(f"{M.name}xU", M.coords + self.control_names())
        pi = SmoothMap(B, M, M.symbols)
        us = symcore.syms(self.control_names())
        comps = [sum((u * X.components[i] for u, X in zip(us, self.generators)), sp.Integer(0))
                 for i in range(M.dim)]
        return VectorFieldAlongMap(pi, tuple(comps))


def _values(fields: Sequence[VectorFieldAlongMap], chart: Chart, point: Sequence[float]) -> np.ndarray:
    flat = [c for X in fields for c in X.components]
    f = symcore.compile_exprs(flat, chart.coords)
    return np.array(f(*point), dtype=float).reshape(len(fields), chart.dim)


@dataclass(frozen=True)
class LieRankResult:
    rank: int
    controllable: bool
    bracket_depth: int


def lie_rank(sys: DriftlessSystem, point: Sequence[float]) -> LieRankResult:
    """Rank at ``point`` of the span of the generators and their iterated brackets.

    Level k holds brackets of level k-1 with the generators. Closure stops at
    full rank, when a level is identically zero, or at depth 2n.
    ``bracket_depth`` is the last level that raised the rank.
    """
    point = [float(x) for x in point]
    if len(point) != sys.n:
        raise ChartMismatch(f"point needs {sys.n} coordinates")
    fields = list(sys.generators)
    rank = numeric_rank(_values(fields, sys.chart, point))
    depth = 0
    level = list(sys.generators)
    for k in range(1, 2 * sys.n + 1):
        if rank == sys.n:
            break
        new = []
        for Y in level:
            for X in sys.generators:
                Z = lie_bracket(X, Y)
                if all(c == 0 for c in Z.components) or any(Z == W for W in new):
                    continue
                new.append(Z)
        if not new:
            break
        fields += new
        grown = numeric_rank(_values(fields, sys.chart, point))
        if grown > rank:
            rank, depth = grown, k
        level = new
    return LieRankResult(rank, rank == sys.n, depth)


def rank_profile(sys: DriftlessSystem, rng: np.random.Generator, n: int = 5) -> list[int]:
    """Lie ranks at ``n`` random points; differing entries are reported as they are."""
    pts = symcore.sample_points(sys.chart.coords, n, rng)
    return [lie_rank(sys, [p[c] for c in sys.chart.coords]).rank for p in pts]


def _check_independent(sys: DriftlessSystem, rng: np.random.Generator):
    for p in symcore.sample_points(sys.chart.coords, 10, rng):
        vals = _values(sys.generators, sys.chart, [p[c] for c in sys.chart.coords])
        if numeric_rank(vals) < sys.r:
            raise DependentGenerators("generators are not pointwise independent")


def _in_span(sys: DriftlessSystem, Z: VectorFieldAlongMap, rng: np.random.Generator) -> bool:
    unknowns = tuple(f"__c{a}" for a in range(sys.r))
    cs = symcore.syms(unknowns)
    eqs = [sum((c * X.components[i] for c, X in zip(cs, sys.generators)), sp.Integer(0)) - Z.components[i]
           for i in range(sys.n)]
    try:
        return not solve_linear(LinearSystem(unknowns, eqs), rng).conditions
    except PivotUndecidable:
        for p in symcore.sample_points(sys.chart.coords, 10, rng):
            x = [p[c] for c in sys.chart.coords]
            if numeric_rank(_values(list(sys.generators) + [Z], sys.chart, x)) > sys.r:
                return False
        return True


def involutive(sys: DriftlessSystem, rng: np.random.Generator | None = None) -> bool:
    rng = symcore.default_rng(0) if rng is None else rng
    _check_independent(sys, rng)
    for X, Y in itertools.combinations(sys.generators, 2):
        if not _in_span(sys, lie_bracket(X, Y), rng):
            return False
    return True


# --------------------------------------------------------------------------
# reachability


@dataclass
class ReachabilityResult:
    reached: bool
    signal: ControlSignal | None
    endpoint: tuple[float, ...]
    error: float
    curve: NumericCurve | None = None


def _square(a: int, b: int, s: float, sigma: float, r: int) -> list[tuple[float, ...]]:
    def e(k, amp):
        u = [0.0] * r
        u[k] = amp
        return tuple(u)
    return [e(a, s), e(b, sigma * s), e(a, -s), e(b, -sigma * s)]


def _golden(f, lo: float, hi: float, iters: int = 30) -> float:
    g = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return (a + b) / 2


def reachability_demo(sys: DriftlessSystem, x0: Sequence[float], target: Sequence[float], budget: int = 12,
                      h: float = 1e-3, coarse_h: float = 0.05, amplitude: float = 3.0,
                      tol: float = 1e-2) -> ReachabilityResult:
    """Greedy search over unit-duration piecewise-constant controls.

    Each move is a single generator segment or a four-segment square loop of
    two generators; amplitudes come from a grid plus golden-section search on
    a coarse step. The accepted signal is replayed at step ``h``.
    """
    X = sys.total_field()
    n, r = sys.n, sys.r
    comps = symcore.compile_exprs(X.components, X.source.coords)
    target = np.asarray(target, dtype=float)

    def flow(x, values, step):
        for u in values:
            steps = max(1, int(round(1.0 / step)))
            _, ys = rk4(lambda t, y, u=u: np.array(comps(*y, *u), dtype=float), x, 0.0, 1.0 / steps, steps)
            x = ys[-1]
        return x

    def moves():
        for a in range(r):
            yield 1, lambda s, a=a: [tuple(s if k == a else 0.0 for k in range(r))]
        for a, b in itertools.permutations(range(r), 2):
            for sigma in (1.0, -1.0):
                yield 4, lambda s, a=a, b=b, sigma=sigma: _square(a, b, s, sigma, r)

    x = np.asarray(x0, dtype=float)
    plan: list[tuple[float, ...]] = []
    err = float(np.linalg.norm(x - target))
    grid = np.linspace(-amplitude, amplitude, 25)
    while err >= tol:
        best = None
        for cost, make in moves():
            if len(plan) + cost > budget:
                continue
            f = lambda s: float(np.linalg.norm(flow(x, make(s), coarse_h) - target))
            vals = [f(s) for s in grid]
            k = int(np.argmin(vals))
            s = _golden(f, grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)])
            if abs(s) < 1e-12:
                continue
            e = f(s)
            if best is None or e < best[0] - 1e-12 or (abs(e - best[0]) <= 1e-12 and cost < best[1]):
                best = (e, cost, make(s))
        if best is None or best[0] >= err - 1e-9:
            break
        plan += best[2]
        x = flow(x, best[2], coarse_h)
        err = best[0]

    if not plan:
        end = tuple(map(float, x0))
        return ReachabilityResult(bool(np.linalg.norm(np.asarray(end) - target) < tol), None, end,
                                  float(np.linalg.norm(np.asarray(end) - target)))
    signal = ControlSignal.from_values(plan)
    curve = integral_curve_along_map(X, signal, x0, h)
    end = curve.end[:n]
    final = float(np.linalg.norm(np.asarray(end) - target))
    return ReachabilityResult(final < tol, signal, tuple(end), final, curve)
