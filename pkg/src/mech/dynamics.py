"""Fixed-step RK4 integration and connection geometry along curves.

Covers SODE trajectories, integral curves of vector fields along bundle
projections driven by piecewise-constant controls, covariant derivatives
along curves, parallel transport, geodesics and the canonical involution of
T(TQ).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import sympy as sp

from . import symcore
from .errors import ChartMismatch, ChartSingularity, IntegrationBlowup, NotAProjectionSplit
from .geometry import VectorFieldAlongMap
from .symcore import Expr, as_expr, simplify
from .tangentgeo import SODEField, TangentChart

BLOWUP = 1e6
ZERO = sp.Integer(0)


@dataclass
class NumericCurve:
    times: list[float]
    states: list[tuple[float, ...]]
    h: float
    coords: tuple[str, ...]

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("curve times must increase strictly")

    @property
    def end(self) -> tuple[float, ...]:
        return self.states[-1]

    def column(self, name: str) -> np.ndarray:
        i = self.coords.index(name)
        return np.array([s[i] for s in self.states])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", *self.coords])
        for t, s in zip(self.times, self.states):
            w.writerow([f"{t:.17g}", *(f"{x:.17g}" for x in s)])
        return buf.getvalue()


def _steps(T: float, h: float) -> tuple[int, float]:
    if h <= 0 or T <= 0:
        raise ValueError("need T > 0 and h > 0")
    n = max(1, int(round(T / h)))
    return n, T / n


def rk4(f: Callable[[float, np.ndarray], np.ndarray], y0, t0: float, h: float, n: int,
        guard: Callable[[np.ndarray], None] | None = None) -> tuple[list[float], list[np.ndarray]]:
    """Classical RK4; ``guard`` may raise to abort (chart exits)."""
    y = np.asarray(y0, dtype=float)
    times, states = [t0], [y]
    t = t0
    for k in range(n):
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t0 + (k + 1) * h
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > BLOWUP:
            raise IntegrationBlowup(f"state norm exceeded {BLOWUP:g} at t={t:.6g}")
        if guard is not None:
            guard(y)
        times.append(t)
        states.append(y)
    return times, states


def integrate_sode(Gamma: SODEField, x0: Sequence[float], T: float, h: float) -> NumericCurve:
    """RK4 on the first-order system ``q' = v, v' = f(q, v)``."""
    tc = Gamma.chart
    n = tc.n
    force = symcore.compile_exprs(Gamma.forces, tc.TQ.coords)

    def rhs(t, y):
        return np.concatenate([y[n:], force(*y)])

    steps, hh = _steps(T, h)
    times, states = rk4(rhs, x0, 0.0, hh, steps)
    return NumericCurve(times, [tuple(map(float, s)) for s in states], hh, tc.TQ.coords)


def canonical_involution(state: Sequence) -> tuple:
    """``(q, v, qdot, vdot) -> (q, qdot, v, vdot)`` blockwise."""
    state = tuple(state)
    if len(state) % 4:
        raise ValueError("state of T(TQ) must have 4n entries")
    n = len(state) // 4
    q, v, qd, vd = state[:n], state[n:2 * n], state[2 * n:3 * n], state[3 * n:]
    return q + qd + v + vd


# --------------------------------------------------------------------------
# connections


@dataclass(frozen=True)
class Connection:
    """Coefficients ``Gamma^i_j(x, v)`` of a (possibly nonlinear) connection.

    ``christoffel[i][j][k]`` is set for linear connections, with
    ``Gamma^i_j = Gamma^i_{jk} v^k``. ``guard`` is an expression whose
    vanishing marks a coordinate singularity of the chart.
    """

    chart: TangentChart
    coefficients: tuple[tuple[Expr, ...], ...]
    christoffel: tuple | None = None
    guard: Expr | None = None

    def __post_init__(self):
        n = self.chart.n
        coeffs = tuple(tuple(simplify(as_expr(c)) for c in row) for row in self.coefficients)
        if len(coeffs) != n or any(len(r) != n for r in coeffs):
            raise ChartMismatch(f"connection needs an {n}x{n} coefficient table")
        object.__setattr__(self, "coefficients", coeffs)
        if self.christoffel is not None:
            gam = tuple(tuple(tuple(simplify(as_expr(c)) for c in row) for row in mat) for mat in self.christoffel)
            object.__setattr__(self, "christoffel", gam)
            v = self.chart.v
            for i in range(n):
                for j in range(n):
                    lin = simplify(sum((gam[i][j][k] * v[k] for k in range(n)), ZERO))
                    if lin != coeffs[i][j]:
                        raise ValueError(f"coefficient ({i},{j}) disagrees with the Christoffel symbols")
        if self.guard is not None:
            object.__setattr__(self, "guard", as_expr(self.guard))

    @classmethod
    def from_christoffel(cls, tc: TangentChart, christoffel, guard=None) -> "Connection":
        n = tc.n
        gam = [[[as_expr(christoffel[i][j][k]) for k in range(n)] for j in range(n)] for i in range(n)]
        coeffs = [[sum((gam[i][j][k] * tc.v[k] for k in range(n)), ZERO) for j in range(n)] for i in range(n)]
        return cls(tc, coeffs, gam, guard)

    @classmethod
    def levi_civita(cls, tc: TangentChart, metric, guard=None) -> "Connection":
        n = tc.n
        g = sp.Matrix(n, n, lambda i, j: as_expr(metric[i][j]))
        ginv = g.inv()
        q = tc.q
        gam = [[[simplify(sum((ginv[i, l] * (symcore.diff(g[l, j], q[k]) + symcore.diff(g[l, k], q[j])
                                             - symcore.diff(g[j, k], q[l])) for l in range(n)), ZERO) / 2)
                 for k in range(n)] for j in range(n)] for i in range(n)]
        return cls.from_christoffel(tc, gam, guard)

    def compiled(self):
        n = self.chart.n
        flat = [c for row in self.coefficients for c in row]
        f = symcore.compile_exprs(flat, self.chart.TQ.coords)

        def matrix(x, v):
            return np.array(f(*x, *v), dtype=float).reshape(n, n)

        return matrix

    def guard_fn(self):
        if self.guard is None:
            return None
        g = symcore.compile_exprs([self.guard], self.chart.Q.coords)
        n = self.chart.n

        last = []

        def check(y):
            # a sign change means a step jumped across the singular locus
            val = g(*y[:n])[0]
            if abs(val) < 1e-6 or (last and last[0] * val < 0):
                raise ChartSingularity(f"curve reached the chart singularity {symcore.to_text(self.guard)} = 0")
            last[:] = [val]

        return check

    def geodesic_sode(self) -> SODEField:
        """``v^i d/dq^i - Gamma^i_j v^j d/dv^i``."""
        v = self.chart.v
        n = self.chart.n
        return SODEField(self.chart, [-sum((self.coefficients[i][j] * v[j] for j in range(n)), ZERO)
                                      for i in range(n)])


def horizontal_lift(conn: Connection, x, v, w) -> np.ndarray:
    """``xi^H_{(x,v)}(w) = w^i d/dq^i - Gamma^i_j(x, v) w^j d/dv^i`` as a 2n vector."""
    w = np.asarray(w, dtype=float)
    M = conn.compiled()(x, v)
    return np.concatenate([w, -M @ w])


def covariant_derivative(eta: Sequence, sigma: Sequence, conn: Connection, t: str = "t") -> tuple[Expr, ...]:
    """``d eta^i/dt + Gamma^i_j(sigma, sigma') eta^j`` for components given in ``t``."""
    tt = symcore.sym(t)
    tc = conn.chart
    sigma = [as_expr(s) for s in sigma]
    eta = [as_expr(e) for e in eta]
    lifted = dict(zip(tc.q, sigma)) | dict(zip(tc.v, [symcore.diff(s, tt) for s in sigma]))
    out = []
    for i in range(tc.n):
        total = symcore.diff(eta[i], tt)
        for j in range(tc.n):
            total += conn.coefficients[i][j].xreplace(lifted) * eta[j]
        out.append(simplify(total))
    return tuple(out)


def covariant_derivative_numeric(eta: Sequence, sigma: Sequence, conn: Connection, t0: float,
                                 t: str = "t", dt: float = 1e-4) -> np.ndarray:
    """``X^1 - X^H`` at ``t0`` from finite differences; returns its vertical part.

    ``X^1 = Psi(X')`` is read off the involution of the velocity of the curve
    ``t -> (sigma(t), eta(t))`` in TQ, ``X^H`` is the horizontal lift of ``eta``
    at ``sigma'(t0)``. Their difference must be vertical.
    """
    n = conn.chart.n
    curve = symcore.compile_exprs([as_expr(s) for s in sigma] + [as_expr(e) for e in eta], [t])
    at = lambda s: np.array(curve(s), dtype=float)
    X = at(t0)
    Xdot = (at(t0 + dt) - at(t0 - dt)) / (2 * dt)
    X1 = np.array(canonical_involution(tuple(X) + tuple(Xdot)))
    # X1 = (sigma, sigma', eta, eta'): a vector (eta, eta') at the point sigma'
    x, v = X1[:n], X1[n:2 * n]
    vec = X1[2 * n:]
    diff = vec - horizontal_lift(conn, x, v, vec[:n])
    if np.max(np.abs(diff[:n])) > 1e-9:
        raise AssertionError("X^1 - X^H is not vertical")
    return diff[n:]


def sample_curve(conn_or_chart, sigma: Sequence, T: float, h: float, t: str = "t") -> NumericCurve:
    """Sample ``t -> (sigma(t), sigma'(t))`` on a uniform grid with an even number of intervals."""
    tc = conn_or_chart.chart if isinstance(conn_or_chart, Connection) else conn_or_chart
    tt = symcore.sym(t)
    sigma = [as_expr(s) for s in sigma]
    f = symcore.compile_exprs(sigma + [symcore.diff(s, tt) for s in sigma], [t])
    n, _ = _steps(T, h)
    n += n % 2
    hh = T / n
    times = [k * hh for k in range(n + 1)]
    return NumericCurve(times, [tuple(f(s)) for s in times], hh, tc.TQ.coords)


def parallel_transport(conn: Connection, sigma: NumericCurve, X0: Sequence[float]) -> np.ndarray:
    """Solve ``eta' = -Gamma^i_j(sigma') eta^j`` along a sampled lifted curve.

    RK4 runs with step ``2h`` so every stage lands on a stored sample; the
    curve needs an even number of intervals.
    """
    n = conn.chart.n
    intervals = len(sigma.states) - 1
    if intervals % 2:
        raise ValueError("parallel transport needs an even number of curve intervals")
    M = conn.compiled()
    states = [np.asarray(s, dtype=float) for s in sigma.states]
    mats = [M(s[:n], s[n:]) for s in states]
    eta = np.asarray(X0, dtype=float)
    H = 2 * sigma.h
    for k in range(0, intervals, 2):
        A0, A1, A2 = mats[k], mats[k + 1], mats[k + 2]
        k1 = -A0 @ eta
        k2 = -A1 @ (eta + H / 2 * k1)
        k3 = -A1 @ (eta + H / 2 * k2)
        k4 = -A2 @ (eta + H * k3)
        eta = eta + H / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if np.max(np.abs(eta)) > BLOWUP:
            raise IntegrationBlowup("transported vector blew up")
    return eta


def geodesic(conn: Connection, x0: Sequence[float], v0: Sequence[float], T: float, h: float) -> NumericCurve:
    """Integrate ``sigma'' + Gamma^i_j(sigma') sigma'^j = 0``."""
    n = conn.chart.n
    M = conn.compiled()
    guard = conn.guard_fn()
    if guard is not None:
        guard(np.asarray(x0, dtype=float))

    def rhs(t, y):
        x, v = y[:n], y[n:]
        return np.concatenate([v, -M(x, v) @ v])

    steps, hh = _steps(T, h)
    times, states = rk4(rhs, list(x0) + list(v0), 0.0, hh, steps, guard)
    return NumericCurve(times, [tuple(map(float, s)) for s in states], hh, conn.chart.TQ.coords)


# --------------------------------------------------------------------------
# control signals and integral curves along projections


@dataclass(frozen=True)
class ControlSignal:
    """Piecewise-constant controls: ``((t_start, t_end), values)`` partitioning [0, T]."""

    segments: tuple

    def __post_init__(self):
        segs = tuple(((float(a), float(b)), tuple(float(u) for u in vals)) for (a, b), vals in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ValueError("empty control signal")
        if segs[0][0][0] != 0.0:
            raise ValueError("control signal must start at t=0")
        for ((a, b), _), ((c, _d), _v) in zip(segs, segs[1:]):
            if b != c:
                raise ValueError("control intervals must be contiguous")
        if any(b <= a for (a, b), _ in segs):
            raise ValueError("control intervals must have positive length")
        if len({len(v) for _, v in segs}) != 1:
            raise ValueError("inconsistent control dimension")

    @classmethod
    def from_values(cls, values: Sequence[Sequence[float]], duration: float = 1.0) -> "ControlSignal":
        return cls(tuple(((k * duration, (k + 1) * duration), tuple(v)) for k, v in enumerate(values)))

    @property
    def T(self) -> float:
        return self.segments[-1][0][1]

    @property
    def dim(self) -> int:
        return len(self.segments[0][1])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_start", "t_end", *(f"u{i + 1}" for i in range(self.dim))])
        for (a, b), vals in self.segments:
            w.writerow([f"{a:.17g}", f"{b:.17g}", *(f"{u:.17g}" for u in vals)])
        return buf.getvalue()


def _split_dims(X: VectorFieldAlongMap) -> int:
    pi = X.base
    n = pi.target.dim
    if tuple(pi.components) != pi.source.symbols[:n]:
        raise NotAProjectionSplit("base map must project (x, u) onto x")
    return n


def integral_curve_along_map(X: VectorFieldAlongMap, signal: ControlSignal, x0: Sequence[float],
                             h: float) -> NumericCurve:
    """Integrate ``x' = X(x, u(t))`` piecewise over the control intervals.

    Returns the curve ``t -> (x(t), u(t))`` in the total space; at a switch
    time the recorded control is the one of the following interval.
    """
    n = _split_dims(X)
    m = X.source.dim - n
    if signal.dim != m:
        raise ValueError(f"control signal has {signal.dim} channels, field needs {m}")
    f = symcore.compile_exprs(X.components, X.source.coords)
    x = np.asarray(x0, dtype=float)
    times, states = [0.0], []
    for idx, ((a, b), u) in enumerate(signal.segments):
        if idx == 0:
            states.append(tuple(x) + tuple(u))
        else:
            states[-1] = tuple(x) + tuple(u)

        def rhs(t, y, u=u):
            return np.array(f(*y, *u), dtype=float)

        steps, hh = _steps(b - a, h)
        ts, ys = rk4(rhs, x, a, hh, steps)
        for t, y in zip(ts[1:], ys[1:]):
            times.append(t)
            states.append(tuple(map(float, y)) + tuple(u))
        x = ys[-1]
    return NumericCurve(times, states, h, X.source.coords)


def integral_curve_residual(X: VectorFieldAlongMap, curve: NumericCurve) -> float:
    """Max ``|(pi o gamma)' - X o gamma|`` at interval midpoints (finite differences)."""
    n = _split_dims(X)
    f = symcore.compile_exprs(X.components, X.source.coords)
    worst = 0.0
    for (t0, s0), (t1, s1) in zip(zip(curve.times, curve.states), zip(curve.times[1:], curve.states[1:])):
        dt = t1 - t0
        x0, x1 = np.array(s0[:n]), np.array(s1[:n])
        u = np.array(s0[n:])
        mid = (x0 + x1) / 2
        deriv = (x1 - x0) / dt
        worst = max(worst, float(np.max(np.abs(deriv - np.array(f(*mid, *u))))))
    return worst
