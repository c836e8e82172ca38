"""Double-integrator unicycle dynamics shared by the simulator, the MPC
expert and the CBF constraint builder.

State is (x, y, theta, v) with forward speed v >= 0; controls are
(omega, a) = (turning rate, linear acceleration). Integration is explicit
Euler at a fixed step, with the speed clamped to [0, v_max] and the heading
wrapped to (-pi, pi] after every step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass
class AgentState:
    x: float
    y: float
    theta: float  # rad, wrapped to (-pi, pi]
    v: float      # m/s, forward only


@dataclass
class ControlInput:
    omega: float  # rad/s
    a: float      # m/s^2


@dataclass
class KinodynamicLimits:
    v_max: float = 0.3
    a_max: float = 0.1
    omega_max: float = 0.5
    dt: float = 0.2

    def __post_init__(self):
        if min(self.v_max, self.a_max, self.omega_max, self.dt) <= 0.0:
            raise ValueError("kinodynamic limits must be strictly positive")


DEFAULT_LIMITS = KinodynamicLimits()


def unicycle_derivative(state: AgentState, control: ControlInput):
    """Time derivative (dx, dy, dtheta, dv) = f(x) + B u."""
    return (
        state.v * math.cos(state.theta),
        state.v * math.sin(state.theta),
        control.omega,
        control.a,
    )


def clamp_control(control: ControlInput, limits: KinodynamicLimits) -> ControlInput:
    """Saturate each control component to its symmetric bound."""
    return ControlInput(
        omega=min(max(control.omega, -limits.omega_max), limits.omega_max),
        a=min(max(control.a, -limits.a_max), limits.a_max),
    )


def integrate_step(state: AgentState, control: ControlInput,
                   limits: KinodynamicLimits = DEFAULT_LIMITS) -> AgentState:
    """One explicit Euler step of size limits.dt.

    The speed is clamped to [0, v_max] afterwards (agents never reverse;
    yielding is slowing down) and theta is wrapped to keep the CBF
    trigonometry well conditioned.
    """
    dx, dy, dtheta, dv = unicycle_derivative(state, control)
    dt = limits.dt
    v = state.v + dt * dv
    v = min(max(v, 0.0), limits.v_max)
    return AgentState(
        x=state.x + dt * dx,
        y=state.y + dt * dy,
        theta=wrap_angle(state.theta + dt * dtheta),
        v=v,
    )
