import pytest

import randgen
from mech import symcore
from mech.errors import ChartMismatch, DegreeError, NotOnIdentity
from mech.geometry import (
    Chart,
    FormAlongMap,
    SmoothMap,
    act,
    canonical_section,
    compose,
    contract,
    exterior_derivative,
    form,
    function,
    identity,
    lie_bracket,
    lie_derivative,
    phi_related,
    projection,
    promote,
    pullback,
    restrict,
    tangent_chart,
    tangent_map,
    vector_field,
    wedge,
)
from mech.symcore import parse
from mech.tangentgeo import TangentChart, complete_lift

Q = Chart("Q", ("q",))
TQ = tangent_chart(Q)
q, v = symcore.syms(["q", "v_q"])


def test_tangent_map_examples():
    assert tangent_map(identity(Q)).tolist() == [[1]]
    assert tangent_map(projection(TQ)).tolist() == [[1, 0]]
    P = Chart("P", ("x", "y"))
    R = Chart("R", ("w",))
    x, y = symcore.syms("xy")
    assert tangent_map(SmoothMap(P, R, (x * y,))).tolist() == [[y, x]]


def test_map_rejects_foreign_symbols():
    with pytest.raises(ChartMismatch):
        SmoothMap(Q, Q, (parse("v_q"),))


def test_promote_and_restrict():
    tau = projection(TQ)
    assert promote(vector_field(Q, [1]), identity(Q)).components == (1,)
    assert promote(vector_field(TQ, [v, 0]), tau).components == (v,)
    assert promote(vector_field(TQ, [0, 1]), tau).components == (0,)
    assert restrict(vector_field(Q, [q]), tau).components == (q,)
    M = Chart("M", ("x",))
    T = Chart("T", ("t",))
    phi = SmoothMap(T, M, (parse("t^2"),))
    assert restrict(vector_field(M, ["x"]), phi).components == (parse("t^2"),)


def test_phi_related(rng):
    tau = projection(TQ)
    assert phi_related(vector_field(TQ, [1, 0]), vector_field(Q, [1]), tau, rng)
    assert not phi_related(vector_field(TQ, [0, 1]), vector_field(Q, [1]), tau, rng)
    tc = TangentChart.from_base(["q1", "q2"])
    Y = vector_field(tc.Q, ["q1*q2", "sin(q1)"])
    assert phi_related(complete_lift(tc, Y), Y, tc.tau, rng)


def test_act_examples():
    T = canonical_section(TQ)
    assert act(T, parse("q^3")) == 3 * q ** 2 * v
    M = Chart("M", ("x",))
    T1 = Chart("T", ("t",))
    phi = SmoothMap(T1, M, (parse("t^2"),))
    assert act(restrict(vector_field(M, [1]), phi), parse("x^2")) == 2 * parse("t^2")


def test_exterior_derivative_examples():
    P = Chart("P", ("q", "p"))
    assert exterior_derivative(function(P, "q")) == form(P, 1, {(0,): 1})
    d = exterior_derivative(form(P, 1, {(0,): "p"}))
    assert d == form(P, 2, {(1, 0): 1})
    with pytest.raises(NotOnIdentity):
        exterior_derivative(FormAlongMap(projection(TQ), 1, {(0,): v}))


def test_contract_examples():
    T = canonical_section(TQ)
    assert contract(T, form(Q, 1, {(0,): 1})).scalar == v
    assert contract(vector_field(TQ, [1, 0]), form(TQ, 2, {(0, 1): 1})) == form(TQ, 1, {(1,): 1})
    with pytest.raises(DegreeError):
        contract(T, function(Q, q))
    TsQ = canonical_section(Chart("T*Q", ("q", "p_q"), "T*M", Q))
    assert TsQ[(0,)] == symcore.sym("p_q")


def test_lie_derivative_examples():
    assert lie_derivative(vector_field(Q, [1]), form(Q, 1, {(0,): q})) == form(Q, 1, {(0,): 1})
    T = canonical_section(TQ)
    assert lie_derivative(T, function(Q, parse("sin(q)"))).scalar == parse("cos(q)*v_q")


def test_pullback_examples():
    tau = projection(TQ)
    assert pullback(tau, form(Q, 1, {(0,): 1})) == form(TQ, 1, {(0,): 1})
    TsQ = Chart("T*Q", ("q", "p_q"), "T*M", Q)
    FL = SmoothMap(TQ, TsQ, (q, v))
    assert pullback(FL, form(TsQ, 2, {(0, 1): 1})) == form(TQ, 2, {(0, 1): 1})


def test_canonical_sections():
    assert canonical_section(TQ).components == (v,)
    tc = TangentChart.from_base(["a", "b", "c"])
    assert canonical_section(tc.TQ).components == tc.v


def test_degree_errors():
    with pytest.raises(DegreeError):
        form(Q, 2, {(0, 1): 1})


def test_leibniz(rng):
    for _ in range(5):
        N, M = randgen.chart(2, "n"), randgen.chart(2, "m")
        phi = randgen.smooth_map(N, M, rng)
        X = randgen.field_along(phi, rng)
        h, l = randgen.expr(M, rng), randgen.expr(M, rng)
        r = act(X, h * l) - act(X, h) * phi.pull(l) - phi.pull(h) * act(X, l)
        assert symcore.max_abs([symcore.simplify(r)], rng) < 1e-9


def test_cartan_on_functions(rng):
    M = randgen.chart(3, "m")
    X = randgen.field(M, rng)
    f = randgen.expr(M, rng)
    assert symcore.simplify(lie_derivative(X, function(M, f)).scalar - act(X, f)) == 0


def test_anti_derivation(rng):
    for p, s in [(1, 1), (1, 2), (2, 1)]:
        N, M = randgen.chart(3, "n"), randgen.chart(3, "m")
        phi = randgen.smooth_map(N, M, rng)
        X = randgen.field_along(phi, rng)
        a, b = randgen.random_form(M, p, rng), randgen.random_form(M, s, rng)
        lhs = contract(X, wedge(a, b))
        rhs = wedge(contract(X, a), pullback(phi, b)) + wedge(pullback(phi, a), contract(X, b)).scale((-1) ** p)
        assert randgen.residual(lhs, rhs, rng) < 1e-9


def test_pullback_functorial(rng):
    A, B, C = randgen.chart(2, "a"), randgen.chart(3, "b"), randgen.chart(2, "c")
    phi, psi = randgen.smooth_map(A, B, rng), randgen.smooth_map(B, C, rng)
    beta = randgen.random_form(C, 1, rng)
    assert randgen.residual(pullback(compose(psi, phi), beta), pullback(phi, pullback(psi, beta)), rng) < 1e-9


def test_d_squared(rng):
    M = randgen.chart(3, "m")
    for p in range(3):
        assert exterior_derivative(exterior_derivative(randgen.random_form(M, p, rng))).is_zero()


def test_bracket_antisymmetric(rng):
    M = randgen.chart(2, "m")
    X, Y = randgen.field(M, rng), randgen.field(M, rng)
    s = lie_bracket(X, Y) + lie_bracket(Y, X)
    assert all(c == 0 for c in s.components)


def test_form_printing():
    w = form(TQ, 2, {(0, 1): q})
    assert str(w) == "(q)*dq∧dv_q"
    assert str(form(TQ, 1, {})) == "0"
    assert w == form(TQ, 2, {(1, 0): -q})
    assert w[(1, 0)] == -q
