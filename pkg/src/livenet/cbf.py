"""Linear inequality rows over the control input (omega, a).

Two families of rows are built for every control cycle:

* obstacle rows: second-order barrier b = dx^2 + dy^2 - (r_i + r_j)^2 on
  the joint ego/obstacle state, turned into -L_gL_f b . u <= L_f^2 b +
  (p1 + p2) L_f b + p1 p2 b with trainable positive penalties p1, p2.
  Obstacles cover both static wall circles (theta = 0, v = 0) and other
  agents treated as constant-velocity movers.

* liveness row: when the forward rays of two moving agents cross, the
  time gap between their critical points reaching the projected crossing
  point c is kept one-sided. The barrier is delta * (t_j - t_i) with
  t = d / v and delta = +1 when the ego arrives first. The row constrains
  only the acceleration channel (zero omega coefficient), so the filter
  never steers the agent off its path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import AgentState, KinodynamicLimits

# Below this speed a time-to-crossing d/v is numerically meaningless, so the
# liveness row is skipped for that pair; obstacle rows still guarantee safety.
V_FLOOR = 1e-3
# Normalized-ray determinant below which the crossing geometry is rejected.
DET_EPS = 1e-9


@dataclass
class ObstacleView:
    """How the ego agent sees one obstacle: pose, speed and hull radius.

    Static obstacles carry theta = 0 and v = 0.
    """
    x: float
    y: float
    theta: float
    v: float
    radius: float


@dataclass
class ConstraintRow:
    g: np.ndarray          # coefficients on (omega, a)
    h: float
    kind: str              # "obstacle" | "liveness" | "bound"
    source_id: str


@dataclass
class LivenessGeometry:
    intersects: bool
    critical_i: tuple = (0.0, 0.0)
    critical_j: tuple = (0.0, 0.0)
    collision_point: tuple = (0.0, 0.0)
    d_i: float = 0.0
    d_j: float = 0.0
    t_i: float = 0.0
    t_j: float = 0.0
    delta: int = -1


@dataclass
class PenaltyValues:
    p_o1: float
    p_o2: float
    p_l_fast: float   # liveness penalty used when ego passes first (delta=+1)
    p_l_slow: float   # liveness penalty used when ego yields (delta=-1)


def obstacle_barrier(ego: AgentState, obs: ObstacleView, ego_radius: float) -> float:
    """b = (x_i - x_j)^2 + (y_i - y_j)^2 - (r_i + r_j)^2; safe set is b >= 0."""
    dx = ego.x - obs.x
    dy = ego.y - obs.y
    rr = ego_radius + obs.radius
    return dx * dx + dy * dy - rr * rr


def obstacle_lie_derivatives(ego: AgentState, obs: ObstacleView):
    """Drift and control derivatives of the obstacle barrier.

    Returns (Lf_b, Lf2_b, LgLf_b) where LgLf_b is the 2-vector acting on
    (omega, a). The obstacle moves with constant (theta, v); the ego's
    controls enter only through the second derivative. The cross term of
    Lf2_b uses cos(theta_i - theta_j), the form validated by the
    finite-difference oracle in the test suite.
    """
    dx = ego.x - obs.x
    dy = ego.y - obs.y
    ci, si = math.cos(ego.theta), math.sin(ego.theta)
    cj, sj = math.cos(obs.theta), math.sin(obs.theta)
    dvx = ego.v * ci - obs.v * cj
    dvy = ego.v * si - obs.v * sj
    lf_b = 2.0 * dx * dvx + 2.0 * dy * dvy
    lf2_b = 2.0 * (dvx * dvx + dvy * dvy)  # = 2(v_i^2 + v_j^2 - 2 v_i v_j cos(th_i - th_j))
    lglf_b = np.array([
        -2.0 * dx * ego.v * si + 2.0 * dy * ego.v * ci,
        2.0 * dx * ci + 2.0 * dy * si,
    ])
    return lf_b, lf2_b, lglf_b


def obstacle_constraint_row(ego: AgentState, obs: ObstacleView, ego_radius: float,
                            p_o1: float, p_o2: float,
                            source_id: str = "obstacle") -> ConstraintRow:
    """Second-order barrier condition rearranged to g . u <= h.

    g = -LgLf_b and h = Lf2_b + (p1 + p2) Lf_b + p1 p2 b, with the penalty
    rate term dropped (penalties are per-step constants from the policy).
    """
    assert p_o1 > 0.0 and p_o2 > 0.0, "barrier penalties must be positive"
    b = obstacle_barrier(ego, obs, ego_radius)
    lf_b, lf2_b, lglf_b = obstacle_lie_derivatives(ego, obs)
    h = lf2_b + (p_o1 + p_o2) * lf_b + (p_o1 * p_o2) * b
    return ConstraintRow(g=-lglf_b, h=h, kind="obstacle", source_id=source_id)


def _ray_params(px, py, th_i, qx, qy, th_j):
    """Solve p + s*dir_i = q + r*dir_j for unit heading directions.

    Returns (s, r, det) with det = sin(th_i - th_j); the caller decides what
    to do with near-parallel rays.
    """
    ci, si = math.cos(th_i), math.sin(th_i)
    cj, sj = math.cos(th_j), math.sin(th_j)
    det = si * cj - ci * sj
    if abs(det) < DET_EPS:
        return 0.0, 0.0, det
    dx = qx - px
    dy = qy - py
    s = (dy * cj - dx * sj) / det
    r = (dy * ci - dx * si) / det
    return s, r, det


def ray_intersection(ego: AgentState, other: ObstacleView):
    """Do the forward rays from the two agents' positions cross?

    Returns (intersects, s, r): the ray parameters in unit-direction form.
    Requires both agents to be moving; a parked agent has no spatial path
    to conflict with.
    """
    if ego.v <= V_FLOOR or other.v <= V_FLOOR:
        return False, 0.0, 0.0
    s, r, det = _ray_params(ego.x, ego.y, ego.theta, other.x, other.y, other.theta)
    if abs(det) < DET_EPS:
        return False, 0.0, 0.0
    return (s > 0.0 and r > 0.0), s, r


def critical_points(ego: AgentState, other: ObstacleView, ego_radius: float):
    """Closest hull points along the center line: p_i + r_i*u and p_j - r_j*u.

    u is the unit vector from ego to other; raises on coincident centers.
    """
    ux = other.x - ego.x
    uy = other.y - ego.y
    dist = math.hypot(ux, uy)
    if dist < 1e-12:
        raise ValueError("agent centers coincide; critical points undefined")
    ux /= dist
    uy /= dist
    p_i = (ego.x + ego_radius * ux, ego.y + ego_radius * uy)
    p_j = (other.x - other.radius * ux, other.y - other.radius * uy)
    return p_i, p_j


def projected_collision_point(critical_i, critical_j, theta_i, theta_j):
    """Crossing point of the two critical-point rays, or None when the rays
    are near-parallel in normalized form."""
    s, r, det = _ray_params(critical_i[0], critical_i[1], theta_i,
                            critical_j[0], critical_j[1], theta_j)
    if abs(det) < DET_EPS:
        return None
    return (critical_i[0] + s * math.cos(theta_i),
            critical_i[1] + s * math.sin(theta_i))


def times_to_collision(critical_i, critical_j, collision_point, v_i, v_j):
    """Distances and times d/v from each critical point to the crossing
    point; delta = +1 iff the ego arrives strictly first (ties yield)."""
    d_i = math.hypot(critical_i[0] - collision_point[0], critical_i[1] - collision_point[1])
    d_j = math.hypot(critical_j[0] - collision_point[0], critical_j[1] - collision_point[1])
    t_i = d_i / v_i
    t_j = d_j / v_j
    delta = 1 if t_i < t_j else -1
    return d_i, d_j, t_i, t_j, delta


def liveness_geometry(ego: AgentState, other: ObstacleView, ego_radius: float) -> LivenessGeometry:
    """Full crossing geometry for one agent pair; intersects=False when any
    stage rejects (parked agent, parallel rays, diverging rays)."""
    ok, _, _ = ray_intersection(ego, other)
    if not ok:
        return LivenessGeometry(intersects=False)
    p_i, p_j = critical_points(ego, other, ego_radius)
    c = projected_collision_point(p_i, p_j, ego.theta, other.theta)
    if c is None:
        return LivenessGeometry(intersects=False)
    d_i, d_j, t_i, t_j, delta = times_to_collision(p_i, p_j, c, ego.v, other.v)
    return LivenessGeometry(intersects=True, critical_i=p_i, critical_j=p_j,
                            collision_point=c, d_i=d_i, d_j=d_j,
                            t_i=t_i, t_j=t_j, delta=delta)


def liveness_barrier(geom: LivenessGeometry) -> float:
    """delta * (t_j - t_i) >= 0: the agreed passing order is preserved."""
    return geom.delta * (geom.t_j - geom.t_i)


def liveness_constraint_row(geom: LivenessGeometry, ego_v: float, p_l: float,
                            source_id: str = "liveness") -> ConstraintRow:
    """First-order barrier condition -delta * (a d_i / v_i^2) <= p_l (t_j - t_i).

    Only the acceleration coefficient is nonzero: the filter modulates speed
    along the path and never steers. With delta = +1 the row bounds how hard
    the leading agent may decelerate; with delta = -1 it caps (and, once the
    gap has opened, reverses) the yielding agent's acceleration, actively
    growing the time gap rather than merely preserving it.
    """
    assert p_l > 0.0, "liveness penalty must be positive"
    assert ego_v > V_FLOOR, "liveness row undefined at standstill"
    g = np.array([0.0, -geom.delta * geom.d_i / (ego_v * ego_v)])
    h = p_l * (geom.t_j - geom.t_i)
    return ConstraintRow(g=g, h=h, kind="liveness", source_id=source_id)


def bound_rows(limits: KinodynamicLimits):
    """Four box rows on (omega, a)."""
    return [
        ConstraintRow(g=np.array([1.0, 0.0]), h=limits.omega_max, kind="bound", source_id="omega+"),
        ConstraintRow(g=np.array([-1.0, 0.0]), h=limits.omega_max, kind="bound", source_id="omega-"),
        ConstraintRow(g=np.array([0.0, 1.0]), h=limits.a_max, kind="bound", source_id="a+"),
        ConstraintRow(g=np.array([0.0, -1.0]), h=limits.a_max, kind="bound", source_id="a-"),
    ]


def build_all_rows(ego: AgentState, ego_radius: float, views: list,
                   penalties: PenaltyValues, limits: KinodynamicLimits):
    """All rows for one control cycle, deterministically ordered.

    Obstacle rows come first, sorted by center distance ascending (ties by
    input order), then at most one liveness row per moving view whose ray
    crosses ours, then the four control-bound rows.
    """
    order = sorted(range(len(views)),
                   key=lambda k: (math.hypot(views[k].x - ego.x, views[k].y - ego.y), k))
    rows = []
    for k in order:
        rows.append(obstacle_constraint_row(ego, views[k], ego_radius,
                                            penalties.p_o1, penalties.p_o2,
                                            source_id=f"obs{k}"))
    for k in order:
        view = views[k]
        if view.v <= V_FLOOR or ego.v <= V_FLOOR:
            continue
        geom = liveness_geometry(ego, view, ego_radius)
        if not geom.intersects:
            continue
        p_l = penalties.p_l_fast if geom.delta == 1 else penalties.p_l_slow
        rows.append(liveness_constraint_row(geom, ego.v, p_l, source_id=f"live{k}"))
    rows.extend(bound_rows(limits))
    return rows
