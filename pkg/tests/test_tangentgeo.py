import pytest
from hypothesis import given, settings, strategies as st

import randgen
from mech import symcore
from mech.errors import ChartMismatch, NotASODE
from mech.geometry import SmoothMap, act, lie_bracket, phi_related, vector_field
from mech.symcore import parse, simplify
from mech.tangentgeo import (
    SODEField,
    SODESection,
    TangentChart,
    along_tau,
    check_vertical_lift,
    complete_lift,
    is_point_transformation,
    is_sode,
    liouville,
    newtonoid_project,
    newtonoid_project_bracket,
    prolong,
    section_of_sode,
    sode_of_section,
    tangent_lift_map,
    total_derivative,
    total_derivative_T1,
    vertical_endomorphism,
    vertical_lift_field,
    vertical_lift_fn,
)

TC1 = TangentChart.from_base(["q"])
TC2 = TangentChart.from_base(["q1", "q2"])
P = parse


def comps(Y):
    return [simplify(c) for c in Y.components]


def random_tc(seed):
    return TangentChart.from_base([f"q{i}" for i in range(1 + seed % 3)])


def test_chart_names():
    assert TC1.TQ.coords == ("q", "v_q")
    assert TC1.T2Q.coords == ("q", "v_q", "a_q")
    assert TC1.TstarQ.coords == ("q", "p_q")
    with pytest.raises(ValueError):
        TangentChart.from_base(["q", "v_q"])


def test_liouville_examples():
    assert comps(liouville(TC1)) == [0, P("v_q")]
    assert comps(liouville(TC2)) == [0, 0, P("v_q1"), P("v_q2")]
    assert act(liouville(TC1), P("v_q^2/2")) == P("v_q^2")


def test_vertical_endomorphism_examples(rng):
    assert comps(vertical_endomorphism(TC1, TC1.tq_field([1, 0]))) == [0, 1]
    Gamma = SODEField(TC1, (P("-q*v_q"),))
    assert vertical_endomorphism(TC1, Gamma.field) == liouville(TC1)
    Y = TC2.tq_field([randgen.expr(TC2.TQ, rng) for _ in range(4)])
    assert all(c == 0 for c in vertical_endomorphism(TC2, vertical_endomorphism(TC2, Y)).components)


def test_vertical_lift_fn_examples():
    assert vertical_lift_fn(TC1, P("q")) == P("v_q")
    assert vertical_lift_fn(TC1, P("q^2")) == P("2*q*v_q")
    assert vertical_lift_fn(TC1, P("sin(q)")) == P("cos(q)*v_q")


def test_vertical_lift_field_examples(rng):
    assert comps(vertical_lift_field(TC1, along_tau(TC1, [1]))) == [0, 1]
    assert vertical_lift_field(TC1, total_derivative(TC1)) == liouville(TC1)
    X = along_tau(TC1, [P("v_q")])
    XV = vertical_lift_field(TC1, X)
    assert act(XV, vertical_lift_fn(TC1, P("q"))) == act(X, P("q")) == P("v_q")
    assert check_vertical_lift(TC1, vector_field(TC1.Q, ["q^2"]), rng) < 1e-9
    with pytest.raises(ChartMismatch):
        vertical_lift_field(TC1, TC1.tq_field([1, 0]))


def test_complete_lift_examples():
    assert comps(complete_lift(TC1, vector_field(TC1.Q, [1]))) == [1, 0]
    assert comps(complete_lift(TC1, vector_field(TC1.Q, ["q"]))) == [P("q"), P("v_q")]
    rot = complete_lift(TC2, vector_field(TC2.Q, ["-q2", "q1"]))
    assert comps(rot) == [P("-q2"), P("q1"), P("-v_q2"), P("v_q1")]


def test_point_transformations(rng):
    tc = TangentChart.from_base(["q"])
    assert is_point_transformation(tc, tangent_lift_map(tc, [P("q^2")]), rng)
    assert not is_point_transformation(tc, SmoothMap(tc.TQ, tc.TQ, (P("q"), P("v_q^2"))), rng)
    assert is_point_transformation(tc, SmoothMap(tc.TQ, tc.TQ, tc.TQ.symbols), rng)


def test_newtonoid_examples(rng):
    D = SODEField(TC1, (P("-sin(q)"),))
    assert comps(newtonoid_project(TC1, TC1.tq_field([1, 0]), D)) == [1, 0]
    assert newtonoid_project(TC1, TC1.tq_field(["v_q", 0]), D) == D.field
    X = TC2.tq_field([randgen.expr(TC2.TQ, rng) for _ in range(4)])
    D2 = SODEField(TC2, tuple(randgen.expr(TC2.TQ, rng) for _ in range(2)))
    XD = newtonoid_project(TC2, X, D2)
    assert all(c == 0 for c in vertical_endomorphism(TC2, lie_bracket(D2.field, XD)).components)
    with pytest.raises(NotASODE):
        newtonoid_project(TC1, TC1.tq_field([1, 0]), TC1.tq_field([1, 0]))


def test_total_derivative_T1_examples():
    T1 = total_derivative_T1(TC1)
    assert act(T1, P("q")) == P("v_q")
    assert act(T1, P("v_q")) == P("a_q")
    assert act(T1, P("v_q^2/2")) == P("v_q*a_q")


def test_prolong_examples(rng):
    assert comps(prolong(TC1, along_tau(TC1, [1]))) == [1, 0]
    assert comps(prolong(TC1, along_tau(TC1, ["v_q"]))) == [P("v_q"), P("a_q")]
    X = along_tau(TC2, [randgen.expr(TC2.TQ, rng) for _ in range(2)])
    for _ in range(10):
        f = randgen.expr(TC2.Q, rng)
        lhs = act(prolong(TC2, X), act(total_derivative(TC2), f))
        rhs = act(total_derivative_T1(TC2), act(X, f))
        assert simplify(lhs - rhs) == 0


def test_sode_sections():
    gamma = SODESection(TC1, (P("-q"),))
    Gamma = sode_of_section(gamma)
    assert comps(Gamma.field) == [P("v_q"), P("-q")]
    assert section_of_sode(Gamma) == gamma
    H = P("(v_q^2 + q^2)/2")
    assert act(Gamma.field, H) == 0
    assert gamma.pull(act(total_derivative_T1(TC1), H)) == 0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_sode_iff_S_gives_liouville(seed):
    rng = symcore.default_rng(seed)
    tc = random_tc(seed)
    head = list(tc.v) if seed % 2 else [randgen.expr(tc.TQ, rng) for _ in range(tc.n)]
    X = tc.tq_field(head + [randgen.expr(tc.TQ, rng) for _ in range(tc.n)])
    assert is_sode(tc, X) == (vertical_endomorphism(tc, X) == liouville(tc))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_S_image_is_vertical_and_kernel(seed):
    rng = symcore.default_rng(seed)
    tc = random_tc(seed)
    n = tc.n
    Y = tc.tq_field([randgen.expr(tc.TQ, rng) for _ in range(2 * n)])
    assert all(c == 0 for c in vertical_endomorphism(tc, Y).components[:n])
    V = tc.tq_field([0] * n + [randgen.expr(tc.TQ, rng) for _ in range(n)])
    assert all(c == 0 for c in vertical_endomorphism(tc, V).components)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_complete_lift_naturality(seed):
    rng = symcore.default_rng(seed)
    tc = random_tc(seed)
    Y = vector_field(tc.Q, [randgen.expr(tc.Q, rng) for _ in range(tc.n)])
    Z = vector_field(tc.Q, [randgen.expr(tc.Q, rng) for _ in range(tc.n)])
    assert phi_related(complete_lift(tc, Y), Y, tc.tau, rng)
    lhs = lie_bracket(complete_lift(tc, Y), complete_lift(tc, Z))
    rhs = complete_lift(tc, lie_bracket(Y, Z))
    assert symcore.max_abs([a - b for a, b in zip(lhs.components, rhs.components)], rng) < 1e-9


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_newtonoid_is_projection_two_routes(seed):
    rng = symcore.default_rng(seed)
    tc = random_tc(seed)
    X = tc.tq_field([randgen.expr(tc.TQ, rng) for _ in range(2 * tc.n)])
    D = SODEField(tc, tuple(randgen.expr(tc.TQ, rng) for _ in range(tc.n)))
    once = newtonoid_project(tc, X, D)
    assert newtonoid_project(tc, once, D) == once
    assert newtonoid_project_bracket(tc, X, D) == once


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(-4, 4))
def test_prolong_linear(seed, lam):
    rng = symcore.default_rng(seed)
    tc = random_tc(seed)
    X = along_tau(tc, [randgen.expr(tc.TQ, rng) for _ in range(tc.n)])
    Y = along_tau(tc, [randgen.expr(tc.TQ, rng) for _ in range(tc.n)])
    combo = along_tau(tc, [a + lam * b for a, b in zip(X.components, Y.components)])
    lhs = prolong(tc, combo)
    rhs = [a + lam * b for a, b in zip(prolong(tc, X).components, prolong(tc, Y).components)]
    assert all(simplify(a - b) == 0 for a, b in zip(lhs.components, rhs))
