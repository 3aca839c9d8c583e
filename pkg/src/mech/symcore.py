"""Scalar expression kernel.

Expressions are sympy trees built from a small grammar: integer, rational and
float constants, symbols, sums, products, powers and the functions sin, cos,
exp, ln and sqrt. Sympy keeps sums and products flattened and sorted, so
structural equality after :func:`simplify` is plain ``==``.

Numeric evaluation does not go through sympy: expressions are compiled to
Python closures over :mod:`math` so that domain violations surface as
:class:`~mech.errors.DomainError` instead of silently turning complex.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import cmp_to_key, lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np
import sympy as sp
from sympy.printing.str import StrPrinter

from .errors import (
    DomainError,
    EvalError,
    NonAffineEquation,
    ParseError,
    PivotUndecidable,
    UnboundSymbol,
)

Expr = sp.Expr

FUNCTIONS = {"sin": sp.sin, "cos": sp.cos, "exp": sp.exp, "ln": sp.log, "sqrt": sp.sqrt}

# probe thresholds shared by pivots, regularity tests and constraint reduction
NONZERO_TOL = 1e-9
ZERO_TOL = 1e-12


@lru_cache(maxsize=None)
def sym(name: str) -> sp.Symbol:
    return sp.Symbol(name)


def syms(names: Iterable[str]) -> tuple[sp.Symbol, ...]:
    return tuple(sym(n) for n in names)


def as_expr(value) -> Expr:
    """Coerce ints, Fractions, strings (parsed) and sympy objects to Expr."""
    if isinstance(value, sp.Basic):
        return value
    if isinstance(value, str):
        return parse(value)
    if isinstance(value, bool):
        raise TypeError("bool is not an expression")
    if isinstance(value, int):
        return sp.Integer(value)
    if isinstance(value, float):
        return sp.Float(value)
    return sp.sympify(value)


def raw_add(terms: Iterable) -> Expr:
    """Unevaluated sum; meant to be passed to :func:`simplify`."""
    terms = [t for t in map(as_expr, terms) if t != 0]
    if len(terms) < 2:
        return terms[0] if terms else sp.Integer(0)
    return sp.Add(*terms, evaluate=False)


def raw_mul(*factors) -> Expr:
    """Unevaluated product; meant to be passed to :func:`simplify`."""
    fs = []
    for f in map(as_expr, factors):
        if f == 0:
            return sp.Integer(0)
        if f != 1:
            fs.append(f)
    if len(fs) < 2:
        return fs[0] if fs else sp.Integer(1)
    return sp.Mul(*fs, evaluate=False)


def symbol_names(e: Expr) -> set[str]:
    return {s.name for s in e.free_symbols}


# --------------------------------------------------------------------------
# parsing and printing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<id>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos:].strip()[:1]!r} in {text!r}")
        kind = m.lastgroup
        tokens.append((kind, m.group(kind)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str, allowed: set[str] | None):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.allowed = allowed

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None)

    def take(self, value=None):
        tok = self.peek()
        if tok[0] is None:
            raise ParseError(f"unexpected end of input in {self.text!r}")
        if value is not None and tok[1] != value:
            raise ParseError(f"expected {value!r}, got {tok[1]!r} in {self.text!r}")
        self.i += 1
        return tok

    def parse(self) -> Expr:
        if not self.tokens:
            raise ParseError("empty expression")
        e = self.expr()
        if self.i != len(self.tokens):
            raise ParseError(f"trailing input {self.peek()[1]!r} in {self.text!r}")
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            rhs = self.unary()
            e = e * rhs if op == "*" else e / rhs
        return e

    def unary(self):
        if self.peek()[1] == "-":
            self.take()
            return -self.unary()
        if self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            return base ** self.unary()
        return base

    def atom(self):
        kind, value = self.take()
        if kind == "num":
            if any(c in value for c in ".eE"):
                return sp.Float(float(value))
            return sp.Integer(int(value))
        if kind == "id":
            if value in FUNCTIONS:
                self.take("(")
                arg = self.expr()
                self.take(")")
                return FUNCTIONS[value](arg)
            if self.peek()[1] == "(":
                raise ParseError(f"unknown function {value!r}")
            if self.allowed is not None and value not in self.allowed:
                raise ParseError(f"undeclared symbol {value!r}")
            return sym(value)
        if value == "(":
            e = self.expr()
            self.take(")")
            return e
        raise ParseError(f"unexpected {value!r} in {self.text!r}")


def parse(text: str, allowed: Iterable[str] | None = None) -> Expr:
    """Parse infix text (``+ - * / ^``, ``sin cos exp ln sqrt``) into an Expr."""
    return _Parser(text, set(allowed) if allowed is not None else None).parse()


class _Printer(StrPrinter):
    def _print_log(self, e):
        return f"ln({self._print(e.args[0])})"

    def _print_Exp1(self, e):
        return "exp(1)"

    def _print_Float(self, e):
        return repr(float(e))


_printer = _Printer({"order": None})


def to_text(e: Expr) -> str:
    """Inverse of :func:`parse` on canonical forms."""
    return _printer.doprint(as_expr(e)).replace("**", "^")


# --------------------------------------------------------------------------
# symbolic operations


def diff(e: Expr, x) -> Expr:
    return _diff(as_expr(e), x if isinstance(x, sp.Symbol) else sym(x))


def _diff(e: Expr, x: sp.Symbol) -> Expr:
    """Chain and product rules over the grammar; avoids ``Derivative`` overhead."""
    if not e.has(x):
        return sp.Integer(0)
    if e == x:
        return sp.Integer(1)
    if e.is_Add:
        return sp.Add(*(_diff(a, x) for a in e.args))
    if e.is_Mul:
        args = e.args
        terms = []
        for i, a in enumerate(args):
            da = _diff(a, x)
            if da != 0:
                terms.append(sp.Mul(*args[:i], da, *args[i + 1:]))
        return sp.Add(*terms)
    if e.is_Pow:
        b, n = e.args
        if not n.has(x):
            return n * b ** (n - 1) * _diff(b, x)
        return e * (_diff(n, x) * sp.log(b) + n * _diff(b, x) / b)
    u = e.args[0] if len(e.args) == 1 else None
    if isinstance(e, sp.exp):
        return e * _diff(u, x)
    if isinstance(e, sp.sin):
        return sp.cos(u) * _diff(u, x)
    if isinstance(e, sp.cos):
        return -sp.sin(u) * _diff(u, x)
    if isinstance(e, sp.log):
        return _diff(u, x) / u
    return sp.diff(e, x)


def _has_denominator(e: Expr) -> bool:
    for node in sp.preorder_traversal(e):
        if node.is_Pow and node.exp.is_negative:
            return True
    return False


def _sincos_rule(e: Expr) -> Expr:
    w = sp.Wild("w")
    return e.replace(sp.sin(w) ** 2, 1 - sp.cos(w) ** 2)


def simplify(e, trig: bool = False) -> Expr:
    """Canonical form: expanded numerator over expanded denominator.

    Idempotent. ``trig=True`` additionally rewrites sin(u)^2 as 1 - cos(u)^2.
    """
    e = as_expr(e)
    if e.is_Atom:
        return e
    if trig:
        e = _sincos_rule(e)
    try:
        return _distribute(e)
    except _Fallback:
        pass
    e = sp.expand(e, power_exp=False, power_base=False, log=False)
    if _has_denominator(e):
        e = sp.cancel(e)
    return e


class _Fallback(Exception):
    """Input with a denominator; handled by sympy."""


def _distribute(e: Expr) -> Expr:
    """Expanded form of a denominator-free expression.

    Works on a dictionary {monomial: coefficient} so that sympy only builds
    the final terms; function arguments are expanded recursively.
    """
    if e.is_Atom:
        return e
    terms = [(c, mono) for mono, c in _terms(e).items() if not _is_zero(c)]
    if not all(_plain(mono) for _, mono in terms):
        return sp.Add(*(_monomial(c, mono) for c, mono in terms))
    # distinct plain monomials cannot merge: order them as Add would
    factors = {bk: _factor(*bk) for _, mono in terms for bk in mono}
    rank = {f: i for i, f in enumerate(sorted(set(factors.values()), key=_MUL_ORDER))}
    const, rest = None, []
    for c, mono in terms:
        t = _monomial(c, mono, [factors[bk] for bk in mono], rank)
        if mono:
            rest.append(t)
        else:
            const = t
    rest.sort(key=_MUL_ORDER)
    if const is not None:
        rest.insert(0, const)
    if not rest:
        return sp.Integer(0)
    return rest[0] if len(rest) == 1 else sp.Add._from_args(rest)


_MUL_ORDER = cmp_to_key(sp.Basic.compare)


def _is_zero(c) -> bool:
    return c == 0 if isinstance(c, Fraction) else bool(c.is_zero)


def _plain(mono) -> bool:
    exps = [k for b, k in mono if isinstance(b, sp.exp)]
    if exps and exps != [1]:
        return False
    return all(b.is_Symbol or isinstance(b, (sp.sin, sp.cos, sp.log, sp.exp)) for b, _ in mono)


def _factor(b, k) -> Expr:
    return b if k == 1 else sp.Pow(b, k)


def _monomial(c, mono, factors=None, rank=None) -> Expr:
    """``c * prod(b^k)``, assembled in sympy's canonical argument order.

    Only used when no two factors can merge (symbols, sin, cos, ln and at
    most one exp); other bases go through the ``Mul`` constructor.
    ``rank`` maps factors to their precomputed position in that order.
    """
    c = sp.Rational(c.numerator, c.denominator) if isinstance(c, Fraction) else c
    if factors is None:
        factors = [_factor(b, k) for b, k in mono]
    if not _plain(mono):
        return sp.Mul(c, *factors)
    factors.sort(key=_MUL_ORDER if rank is None else rank.__getitem__)
    if c != 1:
        factors.insert(0, c)
    if not factors:
        return sp.Integer(1)
    return factors[0] if len(factors) == 1 else sp.Mul._from_args(factors)


def _mul_terms(a: dict, b: dict) -> dict:
    out: dict = {}
    for ma, ca in a.items():
        da = dict(ma)
        for mb, cb in b.items():
            d = dict(da)
            for base, k in mb:
                d[base] = d.get(base, 0) + k
            key = frozenset(d.items())
            out[key] = out.get(key, 0) + ca * cb
    return out


@lru_cache(maxsize=65536)
def _atom(e: Expr) -> Expr:
    if e.is_Atom:
        return e
    return e.func(*(_distribute(a) for a in e.args))


@lru_cache(maxsize=65536)
def _terms(e: Expr) -> dict:
    if e.is_Rational:
        return {frozenset(): Fraction(int(e.p), int(e.q))}
    if e.is_Number:
        return {frozenset(): e}
    if e.is_Add:
        out: dict = {}
        for a in e.args:
            for m, c in _terms(a).items():
                out[m] = out.get(m, 0) + c
        return out
    if e.is_Mul:
        out = {frozenset(): Fraction(1)}
        for a in e.args:
            out = _mul_terms(out, _terms(a))
        return out
    if e.is_Pow and e.exp.is_Integer and e.exp > 0:
        base = _terms(e.base)
        if len(base) == 1:
            (m, c), = base.items()
            n = int(e.exp)
            return {frozenset((b, k * n) for b, k in m): c ** n}
        out = base
        for _ in range(int(e.exp) - 1):
            out = _mul_terms(out, base)
        return out
    if e.is_Pow and (e.exp.is_negative or not e.exp.is_Number):
        raise _Fallback
    return {frozenset({(_atom(e), 1)}): Fraction(1)}


def substitute(e, bindings: Mapping) -> Expr:
    """Simultaneous substitution of symbols, followed by :func:`simplify`."""
    table = {(k if isinstance(k, sp.Basic) else sym(k)): as_expr(v) for k, v in bindings.items()}
    return simplify(as_expr(e).xreplace(table))


def normalize_constraint(e) -> Expr:
    """Representative of the zero set of ``e``: numerator, primitive, sign-fixed."""
    e = simplify(e)
    num, _ = sp.fraction(sp.together(e))
    num = sp.expand(num)
    if num.is_Number:
        return sp.Integer(0) if num == 0 else sp.Integer(1)
    _, prim = num.as_content_primitive()
    prim = sp.expand(prim)
    if prim.could_extract_minus_sign():
        prim = sp.expand(-prim)
    return prim


def is_monomial(e: Expr) -> bool:
    """Nonzero constant times a product of symbol powers."""
    factors = sp.Mul.make_args(e)
    seen = False
    for f in factors:
        if f.is_Number:
            if f == 0:
                return False
            continue
        base = f.base if f.is_Pow else f
        if not base.is_Symbol:
            return False
        if f.is_Pow and not f.exp.is_Rational:
            return False
        seen = True
    return seen or e.is_Number and e != 0


# --------------------------------------------------------------------------
# numeric evaluation


def _rpow(b, x):
    if b < 0:
        raise DomainError(f"negative base {b} to non-integer power {x}")
    if b == 0 and x < 0:
        raise DomainError("zero to negative power")
    return b ** x


def _sqrt(b):
    if b < 0:
        raise DomainError(f"sqrt of negative value {b}")
    return math.sqrt(b)


def _ln(b):
    if b <= 0:
        raise DomainError(f"ln of non-positive value {b}")
    return math.log(b)


def _bad(what):
    raise DomainError(f"non-real value {what}")


_ENV = {
    "_sin": math.sin,
    "_cos": math.cos,
    "_exp": math.exp,
    "_ln": _ln,
    "_sqrt": _sqrt,
    "_rpow": _rpow,
    "_bad": _bad,
    "_pow": math.pow,
}

_FUNC_CODE = {sp.sin: "_sin", sp.cos: "_cos", sp.exp: "_exp", sp.log: "_ln"}


def _code(e: Expr, names: Mapping[sp.Symbol, str]) -> str:
    if e.is_Symbol:
        if e not in names:
            raise UnboundSymbol(e.name)
        return names[e]
    if e.is_Number:
        if e.is_real is False or not e.is_finite:
            return f"_bad({str(e)!r})"
        return repr(float(e))
    if e.is_NumberSymbol:
        return repr(float(e))
    if e is sp.I or e.has(sp.I):
        return f"_bad({str(e)!r})"
    if e.is_Add:
        return "(" + " + ".join(_code(a, names) for a in e.args) + ")"
    if e.is_Mul:
        return "(" + " * ".join(_code(a, names) for a in e.args) + ")"
    if e.is_Pow:
        b, x = e.args
        bc = _code(b, names)
        if x.is_Integer:
            return f"({bc} ** {int(x)})"
        if x == sp.Rational(1, 2):
            return f"_sqrt({bc})"
        if x.is_Number:
            return f"_rpow({bc}, {float(x)!r})"
        return f"_pow({bc}, {_code(x, names)})"
    if e.func in _FUNC_CODE:
        return f"{_FUNC_CODE[e.func]}({_code(e.args[0], names)})"
    raise EvalError(f"cannot evaluate {e}")


@lru_cache(maxsize=8192)
def _compile(exprs: tuple, names: tuple) -> object:
    table = {sym(n): f"_a{i}" for i, n in enumerate(names)}
    body = ", ".join(_code(e, table) for e in exprs)
    args = ", ".join(table.values())
    return eval(f"lambda {args}: ({body},)", dict(_ENV))


def compile_exprs(exprs: Sequence, names: Sequence[str]):
    """Compile Exprs into ``f(*values) -> tuple[float, ...]`` in the given argument order."""
    raw = _compile(tuple(as_expr(e) for e in exprs), tuple(names))

    def f(*values):
        try:
            return raw(*values)
        except (ValueError, ZeroDivisionError) as exc:
            raise DomainError(str(exc)) from None
        except OverflowError as exc:
            raise EvalError(f"overflow: {exc}") from None

    return f


def evaluate(e, sigma: Mapping[str, float]) -> float:
    """IEEE double value of ``e`` under the full binding ``sigma``."""
    e = as_expr(e)
    for s in sorted(e.free_symbols, key=lambda s: s.name):
        if s.name not in sigma:
            raise UnboundSymbol(s.name)
    names = tuple(sorted(sigma))
    (value,) = compile_exprs([e], names)(*(float(sigma[n]) for n in names))
    if isinstance(value, complex):
        raise DomainError(f"complex value {value}")
    return float(value)


# --------------------------------------------------------------------------
# random probing


def default_rng(seed: int | None = 0) -> np.random.Generator:
    return np.random.default_rng(seed)


def sample_points(names: Sequence[str], n: int, rng: np.random.Generator) -> list[dict[str, float]]:
    """Points drawn uniformly from [-2,-0.1] U [0.1,2] in every coordinate."""
    names = sorted(names)
    mag = rng.uniform(0.1, 2.0, size=(n, len(names)))
    sign = np.where(rng.random((n, len(names))) < 0.5, -1.0, 1.0)
    vals = mag * sign
    return [dict(zip(names, map(float, row))) for row in vals]


def probe_values(exprs: Sequence, rng: np.random.Generator, n: int = 20,
                 names: Iterable[str] | None = None, attempts: int = 10) -> np.ndarray:
    """Evaluate ``exprs`` at ``n`` random points; shape (n, len(exprs)).

    Points where some expression leaves its domain are redrawn.
    """
    exprs = [as_expr(e) for e in exprs]
    if names is None:
        names = set()
        for e in exprs:
            names |= symbol_names(e)
    names = tuple(sorted(names))
    f = compile_exprs(exprs, names)
    out = []
    for _ in range(attempts):
        for p in sample_points(names, n - len(out), rng):
            try:
                out.append(f(*(p[k] for k in names)))
            except DomainError:
                continue
        if len(out) == n:
            return np.array(out, dtype=float).reshape(n, len(exprs))
    raise DomainError("could not find enough points inside the expression domain")


def max_abs(exprs: Sequence, rng: np.random.Generator, n: int = 20) -> float:
    exprs = [as_expr(e) for e in exprs]
    exprs = [e for e in exprs if e != 0]
    if not exprs:
        return 0.0
    return float(np.max(np.abs(probe_values(exprs, rng, n))))


def numerically_zero(exprs: Sequence, rng: np.random.Generator, n: int = 20, tol: float = 1e-9) -> bool:
    return max_abs(exprs, rng, n) <= tol


def certify(e, rng: np.random.Generator, n: int = 5, monomials: bool = True) -> str:
    """Classify ``e`` as ``"nonzero"``, ``"zero"`` or ``"undecided"``.

    Constants are decided exactly; monomials in coordinates count as nonzero
    (generic rank) when ``monomials`` is set; anything else is probed at ``n``
    random points.
    """
    e = simplify(e)
    if e.is_Number:
        return "zero" if e == 0 else "nonzero"
    if monomials and is_monomial(e):
        return "nonzero"
    vals = np.abs(probe_values([e], rng, n)[:, 0])
    if np.all(vals > NONZERO_TOL):
        return "nonzero"
    if np.all(vals < ZERO_TOL):
        return "zero"
    return "undecided"


_LEAVES = ("sin", "cos", "exp")


def random_expr(names: Sequence[str], rng: np.random.Generator, terms: int = 3,
                degree: int = 2, transcendental: bool = True) -> Expr:
    """Small random polynomial in ``names``, optionally with sin/cos/exp factors.

    Used by property checks; stays finite on the sampling domain.
    """
    xs = syms(names)
    e = sp.Integer(0)
    for _ in range(terms):
        c = sp.Rational(int(rng.integers(-5, 6)) or 1, int(rng.integers(1, 4)))
        mono = sp.Integer(1)
        for _ in range(int(rng.integers(0, degree + 1))):
            mono *= xs[int(rng.integers(len(xs)))]
        if transcendental and rng.random() < 0.3:
            f = FUNCTIONS[_LEAVES[int(rng.integers(len(_LEAVES)))]]
            mono *= f(xs[int(rng.integers(len(xs)))])
        e += c * mono
    return e


# --------------------------------------------------------------------------
# linear systems over the field of expressions


@dataclass(frozen=True)
class LinearSystem:
    unknowns: tuple[str, ...]
    equations: tuple[Expr, ...]

    def __post_init__(self):
        object.__setattr__(self, "unknowns", tuple(self.unknowns))
        object.__setattr__(self, "equations", tuple(as_expr(e) for e in self.equations))
        us = syms(self.unknowns)
        for eq in self.equations:
            for u in us:
                if diff(eq, u).free_symbols & set(us):
                    raise NonAffineEquation(f"{to_text(eq)} is not affine in {u.name}")


@dataclass(frozen=True)
class LinearSolution:
    solution: dict
    free: tuple[str, ...]
    conditions: list


def _pivot_rank(a: Expr) -> tuple:
    kind = 0 if a.is_Number else 1 if is_monomial(a) else 2
    return kind, sp.count_ops(a)


def solve_linear(system: LinearSystem, rng: np.random.Generator | None = None) -> LinearSolution:
    """Gauss-Jordan elimination with symbolic pivots.

    Returns the pivot unknowns as expressions in the free unknowns, the free
    unknowns, and the normalized residual conditions that must vanish for the
    system to be solvable.
    """
    rng = default_rng(0) if rng is None else rng
    us = syms(system.unknowns)
    zero = {u: sp.Integer(0) for u in us}
    rows = []
    for eq in system.equations:
        coeffs = [simplify(diff(eq, u)) for u in us]
        rows.append([coeffs, simplify(-eq.xreplace(zero))])

    r = 0
    pivot_cols = []
    for c in range(len(us)):
        best, best_key, undecided = None, None, False
        for i in range(r, len(rows)):
            a = rows[i][0][c]
            if a == 0:
                continue
            status = certify(a, rng)
            if status == "zero":
                rows[i][0][c] = sp.Integer(0)
                continue
            if status == "undecided":
                undecided = True
                continue
            key = _pivot_rank(a)
            if best is None or key < best_key:
                best, best_key = i, key
        if best is None:
            if undecided:
                raise PivotUndecidable(f"cannot certify a pivot for unknown {us[c].name}")
            continue
        rows[r], rows[best] = rows[best], rows[r]
        coeffs, rhs = rows[r]
        p = coeffs[c]
        rows[r] = [[simplify(x / p) for x in coeffs], simplify(rhs / p)]
        for i in range(len(rows)):
            if i == r:
                continue
            f = rows[i][0][c]
            if f == 0:
                continue
            rows[i] = [
                [simplify(x - f * y) for x, y in zip(rows[i][0], rows[r][0])],
                simplify(rows[i][1] - f * rows[r][1]),
            ]
        pivot_cols.append(c)
        r += 1

    free_cols = [c for c in range(len(us)) if c not in pivot_cols]
    solution = {}
    for k, c in enumerate(pivot_cols):
        coeffs, rhs = rows[k]
        solution[us[c].name] = simplify(rhs - sum((coeffs[f] * us[f] for f in free_cols), sp.Integer(0)))

    conditions = []
    for coeffs, rhs in rows[r:]:
        if rhs == 0:
            continue
        if certify(rhs, rng, monomials=False) == "zero":
            continue
        cond = normalize_constraint(rhs)
        if cond not in conditions:
            conditions.append(cond)
    return LinearSolution(solution, tuple(us[c].name for c in free_cols), conditions)
