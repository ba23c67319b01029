import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from convoylab.dynamics import (BicycleModel, ControlInput, VehicleParams, VehicleState, linearize,
                                rk4_jacobians, step, wrap_angle)
from oracles import fd_jacobians

P = VehicleParams()


def test_straight_line_step():
    s = step(VehicleState(0, 0, 0, 2), ControlInput(0, 0), 0.1, P)
    assert s.x == pytest.approx(0.2, abs=1e-12)
    assert (s.y, s.psi, s.v) == (0.0, 0.0, 2.0)


def test_zero_speed_is_a_fixed_point():
    s0 = VehicleState(3.0, -1.0, 0.7, 0.0)
    assert step(s0, ControlInput(0.0, 0.3), 0.5, P) == s0


def test_quarter_circle():
    delta = math.atan(P.wheelbase / 10.0)  # turn radius 10 m
    n = 200
    dt = (math.pi / 2 * 10.0) / n
    s = VehicleState(0, 0, 0, 1)
    for _ in range(n):
        s = step(s, ControlInput(0.0, delta), dt, P)
    assert s.x == pytest.approx(10.0, abs=1e-6)
    assert s.y == pytest.approx(10.0, abs=1e-6)
    assert s.psi == pytest.approx(math.pi / 2, abs=1e-6)


def test_speed_clamped_and_heading_wrapped():
    p = VehicleParams(v_max=5.0)
    s = step(VehicleState(0, 0, 3.1, 4.9), ControlInput(3.0, 0.4), 0.5, p)
    assert s.v == 5.0
    assert -math.pi < s.psi <= math.pi
    s = step(VehicleState(0, 0, 0, 0.1), ControlInput(-3.0, 0.0), 0.5, p)
    assert s.v == 0.0


@pytest.mark.parametrize("dt", [0.0, -0.1])
def test_bad_dt(dt):
    with pytest.raises(ValueError):
        step(VehicleState(0, 0, 0, 1), ControlInput(0, 0), dt, P)


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        VehicleState(float("nan"), 0, 0, 0)
    with pytest.raises(ValueError):
        step(VehicleState(0, 0, 0, 1), ControlInput(float("inf"), 0), 0.1, P)


def test_tan_singularity_rejected():
    with pytest.raises(ValueError):
        linearize(VehicleState(0, 0, 0, 1), ControlInput(0, math.pi / 2), 0.1, P)


def test_params_validation():
    with pytest.raises(ValueError):
        VehicleParams(wheelbase=0)
    with pytest.raises(ValueError):
        VehicleParams(delta_max=2.0)
    with pytest.raises(ValueError):
        VehicleParams(v_min=3.0, v_max=1.0)


def test_clamp():
    u = P.clamp(ControlInput(10.0, -2.0))
    assert u == ControlInput(P.a_max, -P.delta_max)


def test_linearize_at_rest_matches_fd():
    for psi in (0.0, 0.8, -2.5):
        s, u = VehicleState(1.0, 2.0, psi, 0.0), ControlInput(0.0, 0.0)
        lin = linearize(s, u, 0.1, P)
        A_fd, B_fd = fd_jacobians(s, u, 0.1, P, h=1e-5, forward=True)
        assert np.max(np.abs(lin.A - A_fd)) < 1e-6
        assert np.max(np.abs(lin.B - B_fd)) < 1e-6
        assert lin.A[0, 3] == pytest.approx(0.1 * math.cos(psi))


def test_dt_to_zero_limit():
    lin = linearize(VehicleState(1, 2, 0.3, 4.0), ControlInput(1.0, 0.2), 1e-12, P)
    assert np.max(np.abs(lin.A - np.eye(4))) < 1e-9
    assert np.max(np.abs(lin.B)) < 1e-9


def test_jacobians_match_fd_on_seeded_samples():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        s = VehicleState(*rng.uniform(-50, 50, 2), rng.uniform(-math.pi, math.pi), rng.uniform(0.2, 9.0))
        u = ControlInput(rng.uniform(-2.5, 2.5), rng.uniform(-0.45, 0.45))
        dt = rng.uniform(0.01, 0.2)
        lin = linearize(s, u, dt, P)
        A_fd, B_fd = fd_jacobians(s, u, dt, P)
        worst = max(worst, np.max(np.abs(lin.A - A_fd)), np.max(np.abs(lin.B - B_fd)))
    assert worst < 1e-5


def test_batched_jacobians_equal_single():
    rng = np.random.default_rng(3)
    X = np.column_stack([rng.normal(size=(5, 2)), rng.uniform(-3, 3, 5), rng.uniform(0.5, 5, 5)])
    U = np.column_stack([rng.uniform(-1, 1, 5), rng.uniform(-0.3, 0.3, 5)])
    A, B = rk4_jacobians(X, U, 0.1, P)
    for k in range(5):
        lin = linearize(VehicleState(*X[k]), ControlInput(*U[k]), 0.1, P)
        np.testing.assert_array_equal(A[k], lin.A)
        np.testing.assert_array_equal(B[k], lin.B)


def test_model_step_matches_step():
    m = BicycleModel(P, 0.1)
    x = np.array([1.0, 2.0, 0.4, 3.0])
    u = np.array([0.5, 0.1])
    s = step(VehicleState(*x), ControlInput(*u), 0.1, P)
    np.testing.assert_array_equal(m.step(x, u), s.as_array())


@settings(max_examples=200, deadline=None)
@given(
    x=st.floats(-1e3, 1e3), y=st.floats(-1e3, 1e3), psi=st.floats(-10, 10), v=st.floats(0, 10),
    a=st.floats(-3, 3), delta=st.floats(-0.5, 0.5), dt=st.floats(0.001, 0.5),
)
def test_step_invariants(x, y, psi, v, a, delta, dt):
    s = step(VehicleState(x, y, psi, v), ControlInput(a, delta), dt, P)
    assert -math.pi < s.psi <= math.pi
    assert P.v_min <= s.v <= P.v_max
    again = step(VehicleState(x, y, psi, v), ControlInput(a, delta), dt, P)
    assert again == s


@given(st.floats(-1e6, 1e6))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-6)
