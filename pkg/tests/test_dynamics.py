import math

import numpy as np
import pytest

from livenet.dynamics import (AgentState, ControlInput, KinodynamicLimits,
                              clamp_control, integrate_step, unicycle_derivative,
                              wrap_angle)

LIMITS = KinodynamicLimits()


def test_derivative_aligned_with_x_axis():
    d = unicycle_derivative(AgentState(0, 0, 0, 0.3), ControlInput(0, 0))
    assert d == pytest.approx((0.3, 0.0, 0.0, 0.0))


def test_derivative_hand_evaluated():
    d = unicycle_derivative(AgentState(1, 1, math.pi / 2, 0.2), ControlInput(0.5, 0.1))
    assert d == pytest.approx((0.0, 0.2, 0.5, 0.1), abs=1e-15)


def test_derivative_equilibrium():
    for theta in (-2.0, 0.0, 1.3):
        d = unicycle_derivative(AgentState(4.0, -1.0, theta, 0.0), ControlInput(0, 0))
        assert d == pytest.approx((0.0, 0.0, 0.0, 0.0))


def test_euler_step_hand_computed():
    s = integrate_step(AgentState(0, 0, 0, 0.3), ControlInput(0, 0), LIMITS)
    assert (s.x, s.y, s.theta, s.v) == pytest.approx((0.06, 0.0, 0.0, 0.3))


def test_speed_clamped_at_v_max():
    s = integrate_step(AgentState(0, 0, 0, 0.3), ControlInput(0, 0.1), LIMITS)
    assert s.v == 0.3


def test_no_reverse():
    s = integrate_step(AgentState(0, 0, 0, 0.0), ControlInput(0, -0.1), LIMITS)
    assert s.v == 0.0


def test_clamp_control_saturation():
    c = clamp_control(ControlInput(0.9, 0.05), LIMITS)
    assert (c.omega, c.a) == (0.5, 0.05)
    c = clamp_control(ControlInput(0.1, -0.3), LIMITS)
    assert (c.omega, c.a) == (0.1, -0.1)
    c = clamp_control(ControlInput(0.2, 0.05), LIMITS)
    assert (c.omega, c.a) == (0.2, 0.05)


def test_limits_must_be_positive():
    with pytest.raises(ValueError):
        KinodynamicLimits(v_max=0.0)


def test_state_invariants_hold_after_random_steps():
    rng = np.random.default_rng(0)
    for _ in range(500):
        s = AgentState(*rng.uniform(-3, 3, 2), rng.uniform(-math.pi, math.pi),
                       rng.uniform(0, LIMITS.v_max))
        u = ControlInput(rng.uniform(-1, 1), rng.uniform(-0.3, 0.3))
        nxt = integrate_step(s, clamp_control(u, LIMITS), LIMITS)
        assert -math.pi < nxt.theta <= math.pi
        assert 0.0 <= nxt.v <= LIMITS.v_max


def test_zero_control_preserves_heading_and_speed():
    rng = np.random.default_rng(1)
    for _ in range(100):
        s = AgentState(*rng.uniform(-3, 3, 2), rng.uniform(-3, 3), rng.uniform(0, 0.3))
        nxt = integrate_step(s, ControlInput(0, 0), LIMITS)
        assert nxt.theta == s.theta
        assert nxt.v == s.v


def test_finite_difference_matches_derivative():
    # Euler is exact to first order: (step(s,u) - s)/dt equals the analytic
    # derivative away from the speed clamp and the angle-wrap seam.
    rng = np.random.default_rng(2)
    for _ in range(1000):
        s = AgentState(*rng.uniform(-3, 3, 2), rng.uniform(-2.5, 2.5),
                       rng.uniform(0.02, 0.28))
        u = ControlInput(rng.uniform(-0.5, 0.5), rng.uniform(-0.05, 0.05))
        small = KinodynamicLimits(dt=1e-4)
        nxt = integrate_step(s, u, small)
        fd = np.array([nxt.x - s.x, nxt.y - s.y, nxt.theta - s.theta, nxt.v - s.v]) / small.dt
        ref = np.array(unicycle_derivative(s, u))
        assert np.allclose(fd, ref, rtol=1e-6, atol=1e-9)


def test_wrap_angle_range_and_values():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    for t in np.linspace(-10, 10, 101):
        w = wrap_angle(t)
        assert -math.pi < w <= math.pi
        assert math.isclose(math.sin(w), math.sin(t), abs_tol=1e-12)
        assert math.isclose(math.cos(w), math.cos(t), abs_tol=1e-12)
