import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from mech import symcore
from mech.control import (
    DriftlessSystem,
    LinearControlSystem,
    involutive,
    kalman_rank,
    lie_rank,
    numeric_rank,
    rank_profile,
    reachability_demo,
)
from mech.dynamics import integral_curve_along_map
from mech.errors import ChartMismatch, DependentGenerators
from mech.geometry import Chart

R1 = Chart("R1", ("x",))
R2 = Chart("R2", ("x", "y"))
R3 = Chart("R3", ("x", "y", "z"))
HEIS = DriftlessSystem.from_components(R3, [["1", "0", "0"], ["0", "1", "x"]])
PLANE3 = DriftlessSystem.from_components(R3, [["1", "0", "0"], ["0", "1", "0"]])
PLANE2 = DriftlessSystem.from_components(R2, [["1", "0"], ["0", "1"]])


def test_kalman_examples():
    r = kalman_rank(LinearControlSystem([[0, 1], [0, 0]], [[0], [1]]))
    assert (r.rank, r.controllable) == (2, True)
    assert np.array_equal(r.matrix, [[0, 1], [1, 0]])
    r = kalman_rank(LinearControlSystem(np.eye(2), [[1], [0]]))
    assert (r.rank, r.controllable) == (1, False)
    assert kalman_rank(LinearControlSystem(np.eye(3), np.zeros((3, 2)))).rank == 0
    with pytest.raises(ChartMismatch):
        LinearControlSystem(np.eye(2), [[1], [0], [0]])


def test_numeric_rank_tolerance():
    assert numeric_rank([[1.0, 0.0], [0.0, 1e-12]]) == 1
    assert numeric_rank([[1.0, 0.0], [0.0, 1e-9]]) == 2
    assert numeric_rank(np.zeros((2, 3))) == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_kalman_rank_basis_invariant(seed):
    rng = np.random.default_rng(seed)
    n, m = 2 + seed % 3, 1 + seed % 2
    A = rng.integers(-2, 3, (n, n)).astype(float)
    B = rng.integers(-1, 2, (n, m)).astype(float)
    while True:
        T = rng.normal(size=(n, n))
        if np.linalg.cond(T) < 1e3:
            break
    r = kalman_rank(LinearControlSystem(A, B)).rank
    assert r == kalman_rank(LinearControlSystem(T @ A @ np.linalg.inv(T), T @ B)).rank
    assert r == np.linalg.matrix_rank(oracles.kalman_matrix(A, B))


def test_lie_rank_examples():
    r = lie_rank(HEIS, [0.0, 0.0, 0.0])
    assert (r.rank, r.controllable, r.bracket_depth) == (3, True, 1)
    r = lie_rank(PLANE3, [0.3, 0.1, -2.0])
    assert (r.rank, r.controllable, r.bracket_depth) == (2, False, 0)
    r = lie_rank(DriftlessSystem.from_components(R1, [["1"]]), [0.5])
    assert (r.rank, r.controllable) == (1, True)
    with pytest.raises(ChartMismatch):
        lie_rank(HEIS, [0.0, 0.0])


def test_lie_rank_deeper_brackets():
    # [X1, [X1, X2]] is needed: X2 = d/dy + x^2/2 d/dz
    sys_ = DriftlessSystem.from_components(R3, [["1", "0", "0"], ["0", "1", "x^2/2"]])
    assert lie_rank(sys_, [0.0, 0.0, 0.0]).bracket_depth == 2
    assert lie_rank(sys_, [1.0, 0.0, 0.0]).bracket_depth == 1


def test_rank_profile_constant(rng):
    assert rank_profile(HEIS, rng) == [3] * 5
    assert rank_profile(PLANE3, rng) == [2] * 5


def test_involutive_examples(rng):
    assert involutive(PLANE3, rng)
    assert not involutive(HEIS, rng)
    with pytest.raises(DependentGenerators):
        involutive(DriftlessSystem.from_components(R1, [["1"], ["x"]]), rng)


@pytest.mark.parametrize("sys_", [
    PLANE3,
    DriftlessSystem.from_components(R3, [["1", "0", "y"], ["0", "1", "x"]]),
    DriftlessSystem.from_components(R3, [["z", "0", "0"], ["0", "1", "0"]]),
])
def test_involutive_means_no_bracket_growth(sys_, rng):
    assert involutive(sys_, rng)
    for p in symcore.sample_points(sys_.chart.coords, 3, rng):
        x = [p[c] for c in sys_.chart.coords]
        assert lie_rank(sys_, x).rank == numeric_rank([[float(symcore.evaluate(c, p)) for c in X.components]
                                                      for X in sys_.generators])


def test_reachability_heisenberg():
    r = reachability_demo(HEIS, [0.0, 0.0, 0.0], [0.0, 0.0, 1.0])
    assert r.reached and r.error < 1e-2
    assert len(r.signal.segments) <= 12
    end = np.zeros(3)
    for (t0, t1), u in r.signal.segments:
        end = np.array(oracles.heisenberg_flow(end, u, t1 - t0))
    assert np.linalg.norm(end - [0.0, 0.0, 1.0]) < 1e-2
    replay = integral_curve_along_map(HEIS.total_field(), r.signal, [0.0, 0.0, 0.0], 1e-3)
    assert np.max(np.abs(np.array(replay.end[:3]) - r.endpoint)) < 1e-9


def test_reachability_plane():
    r = reachability_demo(PLANE2, [0.0, 0.0], [1.0, -0.5])
    assert r.reached and len(r.signal.segments) == 2
    r = reachability_demo(PLANE3, [0.0, 0.0, 0.0], [0.5, 0.5, 1.0])
    assert not r.reached and r.error >= 1.0 - 1e-9


def test_driftless_validation():
    with pytest.raises(ValueError):
        DriftlessSystem(R2, ())
    with pytest.raises(ChartMismatch):
        DriftlessSystem(R3, (PLANE2.generators[0],))
    assert HEIS.control_names() == ("u1", "u2")
    assert HEIS.total_field().source.coords == ("x", "y", "z", "u1", "u2")
