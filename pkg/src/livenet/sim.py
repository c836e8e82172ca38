"""Scenario construction (doorway, intersection, perturbation suite),
synchronous episode execution for any controller, and the benchmark metric
set (collisions, deadlocks, makespan, velocity change, path deviation,
cycle time).

Geometry conventions
--------------------
Walls are dense circle samplings of segments (circle radius = agent radius,
spacing = agent radius) so agent-wall safety reduces to circle-circle
barriers. Wall circle centers are offset outward from the physical wall
surface by the circle radius, so the free space matches the stated gap and
corridor widths exactly.

* doorway: wall plane x = 0 with a 0.3 m gap centered on the origin;
  agents start 2 m left, +-0.5 m off axis, at full speed, with goals point
  mirrored through the gap center.
* intersection: two perpendicular corridors of width 0.35 m crossing at
  the origin; agents start 1 m before the crossing box at standstill, goals
  1 m past it.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .cbf import ObstacleView, liveness_geometry, obstacle_barrier
from .dynamics import (AgentState, ControlInput, KinodynamicLimits,
                       clamp_control, integrate_step)

EPISODE_HORIZON_S = 18.0
GOAL_TOLERANCE_M = 0.1
AGENT_RADIUS_M = 0.1
DOORWAY_GAP_M = 0.3
DOORWAY_WALL_EXTENT_M = 2.05
CORRIDOR_WIDTH_M = 0.35
CORRIDOR_WALL_EXTENT_M = 1.675
DEADLOCK_SPEED_EPS = 0.01
DEADLOCK_WINDOW_S = 2.0


@dataclass
class AgentSpec:
    start: AgentState
    goal: tuple
    radius: float = AGENT_RADIUS_M


@dataclass
class ScenarioSpec:
    name: str
    agents: list
    obstacles: np.ndarray            # (n, 3) circles: x, y, radius
    limits: KinodynamicLimits = field(default_factory=KinodynamicLimits)
    horizon_s: float = EPISODE_HORIZON_S
    goal_tolerance: float = GOAL_TOLERANCE_M

    @property
    def max_steps(self) -> int:
        return int(round(self.horizon_s / self.limits.dt))


@dataclass
class Perturbation:
    """Offsets applied to the nominal scenario, one entry per agent."""
    start_offsets: list = field(default_factory=lambda: [(0.0, 0.0), (0.0, 0.0)])
    goal_offsets: list = field(default_factory=lambda: [(0.0, 0.0), (0.0, 0.0)])
    headings: list = field(default_factory=lambda: ["path", "path"])  # "path" | "wall"
    speeds: list = field(default_factory=lambda: [None, None])        # None = scenario default
    gap: float | None = None
    label: str = ""


@dataclass
class WorldSnapshot:
    states: list                 # AgentState per agent
    radii: list
    obstacles: np.ndarray        # (n, 3)

    def views_for(self, ego_index: int):
        """Everything agent ego_index must avoid, as ObstacleViews: the other
        agents (constant-velocity movers) then the static wall circles."""
        views = []
        for j, s in enumerate(self.states):
            if j == ego_index:
                continue
            views.append(ObstacleView(s.x, s.y, s.theta, s.v, self.radii[j]))
        for ox, oy, orad in self.obstacles:
            views.append(ObstacleView(float(ox), float(oy), 0.0, 0.0, float(orad)))
        return views


def sample_segment(p0, p1, radius: float, spacing: float) -> np.ndarray:
    """Circles of the given radius along the segment p0-p1, endpoints
    included, center spacing <= spacing."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    length = float(np.linalg.norm(p1 - p0))
    n = max(2, int(math.ceil(length / spacing)) + 1)
    ts = np.linspace(0.0, 1.0, n)
    pts = p0[None, :] + ts[:, None] * (p1 - p0)[None, :]
    return np.column_stack([pts, np.full(n, radius)])


def _doorway_walls(gap: float) -> np.ndarray:
    half = gap / 2.0 + AGENT_RADIUS_M  # circle surfaces end at +-gap/2
    up = sample_segment((0.0, half), (0.0, DOORWAY_WALL_EXTENT_M),
                        AGENT_RADIUS_M, AGENT_RADIUS_M)
    down = sample_segment((0.0, -half), (0.0, -DOORWAY_WALL_EXTENT_M),
                          AGENT_RADIUS_M, AGENT_RADIUS_M)
    return np.vstack([up, down])


def _intersection_walls() -> np.ndarray:
    off = CORRIDOR_WIDTH_M / 2.0 + AGENT_RADIUS_M  # 0.275: surface at 0.175
    ext = CORRIDOR_WALL_EXTENT_M
    segs = []
    for sx in (1.0, -1.0):
        for sy in (1.0, -1.0):
            segs.append(sample_segment((sx * off, sy * off), (sx * ext, sy * off),
                                       AGENT_RADIUS_M, AGENT_RADIUS_M))
            segs.append(sample_segment((sx * off, sy * off), (sx * off, sy * ext),
                                       AGENT_RADIUS_M, AGENT_RADIUS_M))
    return np.vstack(segs)


def _heading(start_xy, target_xy, mode: str) -> float:
    if mode == "wall":
        # aim straight at the wall plane ahead instead of at the passage
        return 0.0 if start_xy[0] < target_xy[0] else math.pi
    return math.atan2(target_xy[1] - start_xy[1], target_xy[0] - start_xy[0])


def build_scenario(kind: str, perturbation: Perturbation | None = None) -> ScenarioSpec:
    """Nominal doorway/intersection geometry, optionally perturbed."""
    pert = perturbation or Perturbation()
    if kind == "doorway":
        gap = pert.gap if pert.gap is not None else DOORWAY_GAP_M
        obstacles = _doorway_walls(gap)
        base_starts = [(-2.0, 0.5), (-2.0, -0.5)]
        base_goals = [(2.0, -0.5), (2.0, 0.5)]
        default_speed = 0.3
        aim = (0.0, 0.0)  # gap center
    elif kind == "intersection":
        obstacles = _intersection_walls()
        d = CORRIDOR_WIDTH_M / 2.0 + 1.0  # 1 m before the crossing box
        base_starts = [(-d, 0.0), (0.0, -d)]
        base_goals = [(d, 0.0), (0.0, d)]
        default_speed = 0.0
        aim = None  # aim at own goal
    else:
        raise ValueError(f"unknown scenario kind: {kind}")

    agents = []
    for i in range(2):
        sx = base_starts[i][0] + pert.start_offsets[i][0]
        sy = base_starts[i][1] + pert.start_offsets[i][1]
        gx = base_goals[i][0] + pert.goal_offsets[i][0]
        gy = base_goals[i][1] + pert.goal_offsets[i][1]
        target = aim if aim is not None else (gx, gy)
        theta = _heading((sx, sy), target, pert.headings[i])
        v0 = pert.speeds[i] if pert.speeds[i] is not None else default_speed
        agents.append(AgentSpec(start=AgentState(sx, sy, theta, v0), goal=(gx, gy)))

    name = kind if not pert.label else f"{kind}:{pert.label}"
    spec = ScenarioSpec(name=name, agents=agents, obstacles=obstacles)
    _validate_scenario(spec)
    return spec


def _validate_scenario(spec: ScenarioSpec):
    states = [a.start for a in spec.agents]
    radii = [a.radius for a in spec.agents]
    if collision_at(states, radii, spec.obstacles):
        raise ValueError(f"scenario {spec.name}: agents start in collision")
    for a in spec.agents:
        d = np.hypot(spec.obstacles[:, 0] - a.goal[0], spec.obstacles[:, 1] - a.goal[1])
        if np.any(d < a.radius + spec.obstacles[:, 2]):
            raise ValueError(f"scenario {spec.name}: goal inside an obstacle")


def collision_at(states, radii, obstacles: np.ndarray) -> bool:
    """Strict overlap test; touching (distance == radius sum) is safe."""
    n = len(states)
    for i in range(n):
        for j in range(i + 1, n):
            d = math.hypot(states[i].x - states[j].x, states[i].y - states[j].y)
            if d < radii[i] + radii[j]:
                return True
    if len(obstacles):
        for i in range(n):
            d = np.hypot(obstacles[:, 0] - states[i].x, obstacles[:, 1] - states[i].y)
            if np.any(d < radii[i] + obstacles[:, 2]):
                return True
    return False


def detect_collision(snapshot: WorldSnapshot) -> bool:
    return collision_at(snapshot.states, snapshot.radii, snapshot.obstacles)


# ------------------------------------------------------------------ episodes

@dataclass
class TrajectoryLog:
    spec: ScenarioSpec
    states: np.ndarray        # (T+1, n, 4)
    controls: np.ndarray      # (T, n, 2)
    min_barrier: np.ndarray   # (T+1, n) min obstacle barrier at each state
    liveness: np.ndarray      # (T+1, n) liveness barrier, nan when undefined
    statuses: np.ndarray      # (T, n) controller-reported QP status strings
    cycle_times: np.ndarray   # (T, n) controller wall time, seconds
    reach_times: np.ndarray   # (n,) goal arrival time in s, nan if never
    collided: bool
    collision_step: int = -1

    @property
    def n_steps(self) -> int:
        return self.controls.shape[0]

    @property
    def all_reached(self) -> bool:
        return bool(np.all(np.isfinite(self.reach_times)))

    def speeds(self) -> np.ndarray:
        return self.states[:, :, 3]

    def to_csv(self, path):
        """One row per agent-step; wall-clock timing is deliberately left
        out so logs are reproducible byte for byte."""
        cols = "step,agent,x,y,theta,v,omega,a,qp_status,min_obstacle_barrier,liveness_barrier"
        lines = [cols]
        T1, n, _ = self.states.shape
        for t in range(T1):
            for i in range(n):
                s = self.states[t, i]
                if t < self.n_steps:
                    u = self.controls[t, i]
                    status = self.statuses[t, i]
                    om, a = repr(float(u[0])), repr(float(u[1]))
                else:
                    om, a, status = "", "", ""
                lines.append(",".join([
                    str(t), str(i),
                    repr(float(s[0])), repr(float(s[1])), repr(float(s[2])), repr(float(s[3])),
                    om, a, status,
                    repr(float(self.min_barrier[t, i])),
                    repr(float(self.liveness[t, i])),
                ]))
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")


def _barriers_at(snapshot: WorldSnapshot):
    """(min obstacle barrier, liveness barrier or nan) per agent."""
    n = len(snapshot.states)
    min_b = np.full(n, np.inf)
    live_b = np.full(n, np.nan)
    for i in range(n):
        ego = snapshot.states[i]
        views = snapshot.views_for(i)
        for v in views:
            min_b[i] = min(min_b[i], obstacle_barrier(ego, v, snapshot.radii[i]))
        for v in views:
            if v.v <= 1e-3:
                continue
            geom = liveness_geometry(ego, v, snapshot.radii[i])
            if geom.intersects:
                live_b[i] = geom.delta * (geom.t_j - geom.t_i)
                break
    return min_b, live_b


def run_episode(spec: ScenarioSpec, controllers) -> TrajectoryLog:
    """Synchronous lockstep rollout.

    Every controller observes the same snapshot, then all states advance by
    one Euler step. Stops at the horizon, when every agent has reached its
    goal, or at the first collision. Wall time is measured around each
    controller call only.
    """
    n = len(spec.agents)
    assert len(controllers) == n
    radii = [a.radius for a in spec.agents]
    states = [a.start for a in spec.agents]
    reach = np.full(n, np.nan)

    states_log = [np.array([[s.x, s.y, s.theta, s.v] for s in states])]
    controls_log, status_log, time_log = [], [], []
    snap = WorldSnapshot(states=list(states), radii=radii, obstacles=spec.obstacles)
    mb, lb = _barriers_at(snap)
    minb_log, live_log = [mb], [lb]
    collided = False
    collision_step = -1

    for t in range(spec.max_steps):
        for i in range(n):
            if math.isnan(reach[i]):
                gx, gy = spec.agents[i].goal
                if math.hypot(states[i].x - gx, states[i].y - gy) <= spec.goal_tolerance:
                    reach[i] = t * spec.limits.dt
        if np.all(np.isfinite(reach)):
            break

        snap = WorldSnapshot(states=list(states), radii=radii, obstacles=spec.obstacles)
        controls, statuses, times = [], [], []
        for i in range(n):
            t0 = time.perf_counter()
            u, status = controllers[i](snap, i)
            times.append(time.perf_counter() - t0)
            controls.append(clamp_control(u, spec.limits))
            statuses.append(status)
        states = [integrate_step(s, u, spec.limits) for s, u in zip(states, controls)]

        states_log.append(np.array([[s.x, s.y, s.theta, s.v] for s in states]))
        controls_log.append(np.array([[u.omega, u.a] for u in controls]))
        status_log.append(statuses)
        time_log.append(times)
        snap = WorldSnapshot(states=list(states), radii=radii, obstacles=spec.obstacles)
        mb, lb = _barriers_at(snap)
        minb_log.append(mb)
        live_log.append(lb)
        if detect_collision(snap):
            collided = True
            collision_step = t
            break

    for i in range(n):
        if math.isnan(reach[i]):
            gx, gy = spec.agents[i].goal
            if math.hypot(states[i].x - gx, states[i].y - gy) <= spec.goal_tolerance:
                reach[i] = len(controls_log) * spec.limits.dt

    T = len(controls_log)
    return TrajectoryLog(
        spec=spec,
        states=np.stack(states_log),
        controls=np.stack(controls_log) if T else np.zeros((0, n, 2)),
        min_barrier=np.stack(minb_log),
        liveness=np.stack(live_log),
        statuses=np.array(status_log, dtype=object) if T else np.zeros((0, n), dtype=object),
        cycle_times=np.array(time_log) if T else np.zeros((0, n)),
        reach_times=reach,
        collided=collided,
        collision_step=collision_step,
    )


def detect_deadlock(log: TrajectoryLog) -> bool:
    """Off goal at the horizon with speed pinned near zero for the final
    window: the agent has stopped making progress and stayed stopped."""
    if log.collided or log.all_reached:
        return False
    if log.n_steps < log.spec.max_steps:
        return False  # ended early for another reason
    window = int(round(DEADLOCK_WINDOW_S / log.spec.limits.dt))
    v = log.speeds()
    for i in range(v.shape[1]):
        if np.isfinite(log.reach_times[i]):
            continue
        if np.all(v[-window:, i] < DEADLOCK_SPEED_EPS):
            return True
    return False


# ------------------------------------------------------------------- metrics

@dataclass
class Metrics:
    collisions: int
    deadlocks: int
    makespan: float        # nan when not all agents reached their goals
    delta_v: float
    delta_path: float      # nan when no desired paths were provided
    cycle_time: float
    success: bool


def point_polyline_distance(point, polyline: np.ndarray) -> float:
    """Euclidean distance from a point to a piecewise-linear path."""
    p = np.asarray(point, dtype=float)
    if len(polyline) == 1:
        return float(np.linalg.norm(p - polyline[0]))
    a = polyline[:-1]
    b = polyline[1:]
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    denom[denom == 0.0] = 1.0
    t = np.clip(np.einsum("ij,ij->i", p[None, :] - a, ab) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return float(np.min(np.linalg.norm(proj - p, axis=1)))


def solo_spec(spec: ScenarioSpec, agent_index: int) -> ScenarioSpec:
    """The same geometry with every other agent removed."""
    return ScenarioSpec(name=f"{spec.name}/solo{agent_index}",
                        agents=[spec.agents[agent_index]],
                        obstacles=spec.obstacles,
                        limits=spec.limits,
                        horizon_s=spec.horizon_s,
                        goal_tolerance=spec.goal_tolerance)


def solo_paths(spec: ScenarioSpec, controller_factory) -> list:
    """Desired path per agent: the trajectory of a solo run in the same
    geometry. controller_factory(spec) must return one controller per
    agent of the (possibly reduced) spec."""
    paths = []
    for i in range(len(spec.agents)):
        sub = solo_spec(spec, i)
        log = run_episode(sub, controller_factory(sub))
        paths.append(log.states[:, 0, :2].copy())
    return paths


def compute_metrics(log: TrajectoryLog, desired_paths=None,
                    controller_factory=None) -> Metrics:
    """Benchmark metrics for one episode.

    desired_paths: per-agent (T, 2) polylines from a solo run. When absent
    and a controller_factory is given they are computed on demand; without
    either, delta_path is nan.
    """
    spec = log.spec
    n = len(spec.agents)
    collided = int(log.collided)
    deadlocked = int(detect_deadlock(log))
    makespan = float(np.max(log.reach_times)) if log.all_reached else float("nan")

    v = log.speeds()
    delta_v = float(np.mean(np.abs(np.diff(v, axis=0)))) if v.shape[0] > 1 else 0.0

    if desired_paths is None and controller_factory is not None:
        desired_paths = solo_paths(spec, controller_factory)
    if desired_paths is not None:
        devs = []
        for i in range(n):
            for t in range(log.states.shape[0]):
                devs.append(point_polyline_distance(log.states[t, i, :2], desired_paths[i]))
        delta_path = float(np.mean(devs))
    else:
        delta_path = float("nan")

    cycle = float(np.mean(log.cycle_times)) if log.cycle_times.size else 0.0
    success = bool(log.all_reached) and not collided and not deadlocked
    return Metrics(collisions=collided, deadlocks=deadlocked, makespan=makespan,
                   delta_v=delta_v, delta_path=delta_path, cycle_time=cycle,
                   success=success)


# ---------------------------------------------------------------- the suite

SUITE_SEED = 20240901
SUITE_SIZE = 28


def _suite_candidates():
    """Cartesian grid the 28-scenario suite is drawn from.

    Offsets are on a 0.5 m scale; headings are toward the doorway or toward
    the wall; speeds are full (0.3) or standstill (0.0). Goal offsets move
    the goal along the wall-parallel axis.
    """
    start_offs = [(0.0, 0.0), (0.25, 0.0), (0.5, 0.0), (0.0, 0.25), (0.0, -0.25),
                  (0.25, 0.25), (0.5, -0.25)]
    goal_offs = [(0.0, 0.0), (0.0, 0.5), (0.0, -0.5), (0.0, 0.25)]
    headings = ["path", "wall"]
    speeds = [0.3, 0.0]
    return start_offs, goal_offs, headings, speeds


def _estimated_solo_time(spec: ScenarioSpec, agent_index: int) -> float:
    """Straight-through-the-gap path length over v_max, plus the time lost
    accelerating from the actual start speed."""
    a = spec.agents[agent_index]
    gap = (0.0, 0.0)
    length = (math.hypot(a.start.x - gap[0], a.start.y - gap[1])
              + math.hypot(a.goal[0] - gap[0], a.goal[1] - gap[1]))
    limits = spec.limits
    t_accel_loss = (limits.v_max - a.start.v) ** 2 / (2 * limits.a_max * limits.v_max)
    return length / limits.v_max + t_accel_loss


def _generate_doorway_suite(seed: int = SUITE_SEED, size: int = SUITE_SIZE):
    """Seeded draw of `size` distinct, feasible doorway perturbations.

    Selection rules (fixed; the generated file is checked into the repo):
    draw fields independently with the generator below, reject duplicates,
    start collisions, the unperturbed nominal case, and combinations whose
    estimated solo time exceeds 15.5 s (they could not finish inside the
    18 s horizon once yielding is added). The first two entries are forced
    coverage: one standstill start and one facing-the-wall heading.
    """
    start_offs, goal_offs, headings, speeds = _suite_candidates()
    rng = np.random.default_rng(seed)
    picked = []
    seen = set()

    forced = [
        Perturbation(start_offsets=[(0.25, 0.0), (0.0, 0.0)],
                     speeds=[0.0, None], label="standstill-a0"),
        Perturbation(start_offsets=[(0.0, 0.0), (0.25, 0.0)],
                     headings=["wall", "path"], label="wallface-a0"),
    ]
    for pert in forced:
        picked.append(pert)
        seen.add(_pert_key(pert))

    while len(picked) < size:
        pert = Perturbation(
            start_offsets=[start_offs[rng.integers(len(start_offs))] for _ in range(2)],
            goal_offsets=[goal_offs[rng.integers(len(goal_offs))] for _ in range(2)],
            headings=[headings[rng.integers(len(headings))] for _ in range(2)],
            speeds=[speeds[rng.integers(len(speeds))] for _ in range(2)],
        )
        key = _pert_key(pert)
        if key in seen:
            continue
        if all(o == (0.0, 0.0) for o in pert.start_offsets + pert.goal_offsets) \
                and pert.headings == ["path", "path"] and pert.speeds == [0.3, 0.3]:
            continue  # the nominal case is evaluated separately
        try:
            spec = build_scenario("doorway", pert)
        except ValueError:
            continue
        if max(_estimated_solo_time(spec, i) for i in range(2)) > 15.5:
            continue
        seen.add(key)
        pert.label = f"s{len(picked):02d}"
        picked.append(pert)
    return picked


def _pert_key(p: Perturbation):
    return (tuple(p.start_offsets), tuple(p.goal_offsets), tuple(p.headings),
            tuple(0.3 if s is None else s for s in p.speeds), p.gap)


def _pert_to_dict(p: Perturbation) -> dict:
    return {"start_offsets": [list(o) for o in p.start_offsets],
            "goal_offsets": [list(o) for o in p.goal_offsets],
            "headings": list(p.headings),
            "speeds": [s for s in p.speeds],
            "gap": p.gap,
            "label": p.label}


def _pert_from_dict(d: dict) -> Perturbation:
    return Perturbation(start_offsets=[tuple(o) for o in d["start_offsets"]],
                        goal_offsets=[tuple(o) for o in d["goal_offsets"]],
                        headings=list(d["headings"]),
                        speeds=[s for s in d["speeds"]],
                        gap=d["gap"],
                        label=d["label"])


def suite_perturbations() -> list:
    """The frozen 28-entry doorway perturbation list (from the packaged
    suite file when present, regenerated from the fixed seed otherwise)."""
    try:
        text = resources.files("livenet").joinpath("data/doorway_suite.json").read_text()
        data = json.loads(text)
        return [_pert_from_dict(d) for d in data["perturbations"]]
    except FileNotFoundError:
        return _generate_doorway_suite()


def perturbation_suite() -> list:
    """The 28 perturbed doorway ScenarioSpecs of the robustness suite."""
    return [build_scenario("doorway", p) for p in suite_perturbations()]


def write_suite_file(path):
    perts = _generate_doorway_suite()
    payload = {"kind": "doorway", "seed": SUITE_SEED, "size": SUITE_SIZE,
               "perturbations": [_pert_to_dict(p) for p in perts]}
    with open(path, "w") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
        f.write("\n")
