"""Receding-horizon MPC-CBF controller: the data-generating expert (with
the liveness constraint on) and the plain safety baseline (liveness off).

Each cycle solves a finite-horizon tracking problem over the stacked
control sequence subject to Euler dynamics, control and speed bounds,
discrete obstacle barrier decay b(x_{t+1}) >= (1 - gamma) b(x_t) for every
nearby obstacle, and, when the forward rays cross, the same decay condition
on the passing-order barrier. The nonlinear program is solved by sequential
quadratic approximation: linearize about the current rollout, solve the QP
with a primal active-set method (one shared quadratic slack keeps the
safety rows soft so every subproblem has a feasible start), repeat to
tolerance.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cbf import ObstacleView, liveness_geometry
from .dynamics import AgentState, ControlInput, KinodynamicLimits, clamp_control, wrap_angle
from .policy import TrainingSample, encode_observation
from .qpdiff import kkt_solve
from .sim import (Perturbation, ScenarioSpec, TrajectoryLog, WorldSnapshot,
                  build_scenario, compute_metrics, run_episode)

OBSTACLE_ACTIVATION_RADIUS = 1.2
SLACK_WEIGHT = 1e5
VIOLATION_OPTIMAL = 1e-7
VIOLATION_ACCEPT = 1e-4


@dataclass
class MPCConfig:
    horizon: int = 8                      # N; the plan holds N-1 controls
    q_state: tuple = (10.0, 10.0, 1.0, 1.0)
    r_control: tuple = (1.0, 1.0)
    q_terminal: tuple = (10.0, 10.0, 1.0, 1.0)
    gamma_obs: float = 0.3
    gamma_live: float = 0.3
    liveness_enabled: bool = True
    max_sqp_iters: int = 6
    tol: float = 1e-3
    # planning-time hull inflation absorbing the constant-velocity
    # prediction error of other agents (they turn, the forecast does not)
    safety_margin: float = 0.03

    def __post_init__(self):
        assert self.horizon >= 2
        assert 0.0 < self.gamma_obs <= 1.0 and 0.0 < self.gamma_live <= 1.0


@dataclass
class PlanResult:
    controls: np.ndarray      # (N-1, 2)
    status: str               # "optimal" | "relaxed" | "infeasible"
    violation: float
    sqp_iters: int


def _rollout(x0: np.ndarray, U: np.ndarray, dt: float):
    """Unclamped Euler rollout and its sensitivities dx_t/dU."""
    n_ctrl = U.shape[0]
    m = 2 * n_ctrl
    xs = np.zeros((n_ctrl + 1, 4))
    S = np.zeros((n_ctrl + 1, 4, m))
    xs[0] = x0
    for t in range(n_ctrl):
        x = xs[t]
        c, s = math.cos(x[2]), math.sin(x[2])
        xs[t + 1] = x + dt * np.array([x[3] * c, x[3] * s, U[t, 0], U[t, 1]])
        A = np.eye(4)
        A[0, 2] = -dt * x[3] * s
        A[0, 3] = dt * c
        A[1, 2] = dt * x[3] * c
        A[1, 3] = dt * s
        S[t + 1] = A @ S[t]
        S[t + 1, 2, 2 * t] += dt
        S[t + 1, 3, 2 * t + 1] += dt
    return xs, S


def _propagated_views(views, n_steps: int, dt: float):
    """Constant-velocity forecast of every view over the horizon."""
    out = []
    for v in views:
        vx = v.v * math.cos(v.theta)
        vy = v.v * math.sin(v.theta)
        out.append([ObstacleView(v.x + vx * t * dt, v.y + vy * t * dt,
                                 v.theta, v.v, v.radius) for t in range(n_steps)])
    return out


def _live_gap(x: np.ndarray, view: ObstacleView, radius: float, delta0: int):
    """Passing-order barrier delta0 * (t_j - t_i) at an arbitrary rollout
    state, or None when the crossing geometry does not hold there."""
    if x[3] <= 1e-3 or view.v <= 1e-3:
        return None
    geom = liveness_geometry(AgentState(x[0], x[1], x[2], x[3]), view, radius)
    if not geom.intersects:
        return None
    return delta0 * (geom.t_j - geom.t_i)


def _live_gap_grad(x, view, radius, delta0, eps=1e-5):
    g = np.zeros(4)
    for k in range(4):
        xp, xm = x.copy(), x.copy()
        xp[k] += eps
        xm[k] -= eps
        fp = _live_gap(xp, view, radius, delta0)
        fm = _live_gap(xm, view, radius, delta0)
        if fp is None or fm is None:
            return None
        g[k] = (fp - fm) / (2 * eps)
    return g


def _active_set_qp(H, q, G, h, z0, max_iter=400):
    """Primal active-set solve of min 1/2 z'Hz + q'z s.t. Gz <= h from a
    feasible start. Returns (z, converged)."""
    z = z0.copy()
    n_rows = G.shape[0]
    work: list = []
    for _ in range(max_iter):
        g_lin = H @ z + q
        sol = kkt_solve(H, -g_lin, G[work], np.zeros(len(work)))
        if sol is None:
            # dependent working set; drop the most recent addition
            if not work:
                return z, False
            work.pop()
            continue
        p, lam = sol
        if np.max(np.abs(p)) < 1e-11:
            if len(work) == 0 or np.min(lam) >= -1e-9:
                return z, True
            work.pop(int(np.argmin(lam)))
            continue
        Gp = G @ p
        resid = h - G @ z
        alpha = 1.0
        block = -1
        for k in range(n_rows):
            if k in work or Gp[k] <= 1e-12:
                continue
            a_k = resid[k] / Gp[k]
            if a_k < alpha - 1e-14:
                alpha = max(a_k, 0.0)
                block = k
        z = z + alpha * p
        if block >= 0:
            work.append(block)
    return z, False


def _preprocess_warm_start(U, x0_v, limits: KinodynamicLimits):
    """Clip the warm start into the control box and bend the acceleration
    components so the induced speed profile stays within [0, v_max]; this
    makes the hard rows feasible at the QP start point."""
    U = U.copy()
    U[:, 0] = np.clip(U[:, 0], -limits.omega_max, limits.omega_max)
    v = x0_v
    for t in range(U.shape[0]):
        a = np.clip(U[t, 1], -limits.a_max, limits.a_max)
        a = min(max(a, (0.0 - v) / limits.dt), (limits.v_max - v) / limits.dt)
        U[t, 1] = a
        v = v + limits.dt * a
    return U


def mpc_plan(state: AgentState, views: list, goal, config: MPCConfig,
             limits: KinodynamicLimits, ego_radius: float = 0.1,
             warm_start: np.ndarray | None = None,
             reference_point=None) -> PlanResult:
    """One receding-horizon solve; returns the planned control sequence.

    views are everything to avoid (other agents as constant-velocity
    movers, wall circles static). reference_point optionally replaces the
    goal as the position/heading target, for funneling through a passage.
    """
    dt = limits.dt
    n_ctrl = config.horizon - 1
    m = 2 * n_ctrl
    x0 = np.array([state.x, state.y, state.theta, state.v])
    target = goal if reference_point is None else reference_point
    dist_goal = math.hypot(target[0] - x0[0], target[1] - x0[1])
    theta_ref = math.atan2(target[1] - x0[1], target[0] - x0[0]) if dist_goal > 1e-6 else x0[2]
    x_ref = np.array([target[0], target[1], theta_ref, limits.v_max])

    near = [v for v in views
            if math.hypot(v.x - x0[0], v.y - x0[1]) <= OBSTACLE_ACTIVATION_RADIUS]
    plan_radius = ego_radius + config.safety_margin
    forecast = _propagated_views(near, config.horizon, dt)

    live_targets = []
    if config.liveness_enabled and state.v > 1e-3:
        for vi, view in enumerate(near):
            if view.v <= 1e-3:
                continue
            geom = liveness_geometry(state, view, ego_radius)
            if geom.intersects:
                live_targets.append((vi, geom.delta))

    if warm_start is None:
        U = np.zeros((n_ctrl, 2))
    else:
        U = warm_start.copy()
    U = _preprocess_warm_start(U, x0[3], limits)

    Q = np.diag(config.q_state)
    QT = np.diag(config.q_terminal)
    R = np.diag(config.r_control)

    def exact_violation(U_val):
        xs, _ = _rollout(x0, U_val, dt)
        worst = 0.0
        for t in range(n_ctrl):
            for vi in range(len(near)):
                o0, o1 = forecast[vi][t], forecast[vi][t + 1]
                b0 = _barrier(xs[t], o0, plan_radius)
                b1 = _barrier(xs[t + 1], o1, plan_radius)
                worst = max(worst, (1 - config.gamma_obs) * b0 - b1)
            for vi, delta0 in live_targets:
                l0 = _live_gap(xs[t], forecast[vi][t], ego_radius, delta0)
                l1 = _live_gap(xs[t + 1], forecast[vi][t + 1], ego_radius, delta0)
                if l0 is not None and l1 is not None:
                    worst = max(worst, (1 - config.gamma_live) * l0 - l1)
        return worst

    best_U = U.copy()
    best_viol = exact_violation(U)
    iters_done = 0
    for it in range(config.max_sqp_iters):
        iters_done = it + 1
        xs, S = _rollout(x0, U, dt)
        H = np.zeros((m, m))
        grad = np.zeros(m)
        for t in range(1, config.horizon):
            W = QT if t == config.horizon - 1 else Q
            resid = xs[t] - x_ref
            resid[2] = wrap_angle(resid[2])
            H += S[t].T @ W @ S[t]
            grad += S[t].T @ (W @ resid)
        for t in range(n_ctrl):
            sl = slice(2 * t, 2 * t + 2)
            H[sl, sl] += R
            grad[sl] += R @ U[t]
        H += 1e-9 * np.eye(m)

        rows_G, rows_h, soft = [], [], []
        # control box on U + dU
        for t in range(n_ctrl):
            for k, bound in ((0, limits.omega_max), (1, limits.a_max)):
                e = np.zeros(m)
                e[2 * t + k] = 1.0
                rows_G.append(e)
                rows_h.append(bound - U[t, k])
                soft.append(False)
                rows_G.append(-e)
                rows_h.append(bound + U[t, k])
                soft.append(False)
        # speed bounds (exactly linear in the accelerations)
        for t in range(1, config.horizon):
            row = np.zeros(m)
            row[1: 2 * t: 2] = dt
            v_t = x0[3] + dt * float(np.sum(U[:t, 1]))
            rows_G.append(row)
            rows_h.append(limits.v_max - v_t)
            soft.append(False)
            rows_G.append(-row)
            rows_h.append(v_t)
            soft.append(False)
        # discrete obstacle barrier decay
        for t in range(n_ctrl):
            for vi in range(len(near)):
                o0, o1 = forecast[vi][t], forecast[vi][t + 1]
                b0 = _barrier(xs[t], o0, plan_radius)
                b1 = _barrier(xs[t + 1], o1, plan_radius)
                db0 = _barrier_grad(xs[t], o0)
                db1 = _barrier_grad(xs[t + 1], o1)
                coeff = db1 @ S[t + 1] - (1 - config.gamma_obs) * (db0 @ S[t])
                rows_G.append(-coeff)
                rows_h.append(b1 - (1 - config.gamma_obs) * b0)
                soft.append(True)
        # discrete liveness barrier decay
        for t in range(n_ctrl):
            for vi, delta0 in live_targets:
                o0, o1 = forecast[vi][t], forecast[vi][t + 1]
                l0 = _live_gap(xs[t], o0, ego_radius, delta0)
                l1 = _live_gap(xs[t + 1], o1, ego_radius, delta0)
                if l0 is None or l1 is None:
                    continue
                dl0 = _live_gap_grad(xs[t], o0, ego_radius, delta0)
                dl1 = _live_gap_grad(xs[t + 1], o1, ego_radius, delta0)
                if dl0 is None or dl1 is None:
                    continue
                coeff = dl1 @ S[t + 1] - (1 - config.gamma_live) * (dl0 @ S[t])
                rows_G.append(-coeff)
                rows_h.append(l1 - (1 - config.gamma_live) * l0)
                soft.append(True)

        G = np.array(rows_G)
        h = np.array(rows_h)
        soft = np.array(soft)
        # variables z = (dU, s) with one shared slack on the safety rows
        Gz = np.hstack([G, -soft.astype(float)[:, None]])
        Gz = np.vstack([Gz, np.concatenate([np.zeros(m), [-1.0]])])
        hz = np.concatenate([h, [0.0]])
        Hz = np.zeros((m + 1, m + 1))
        Hz[:m, :m] = H
        Hz[m, m] = SLACK_WEIGHT
        qz = np.concatenate([grad, [0.0]])
        s0 = max(0.0, float(np.max(-h[soft])) if soft.any() else 0.0) + 1e-12
        z0 = np.concatenate([np.zeros(m), [s0]])
        z, _converged = _active_set_qp(Hz, qz, Gz, hz, z0)
        dU = z[:m].reshape(n_ctrl, 2)
        U = U + dU
        viol = exact_violation(U)
        if viol < best_viol - 1e-12 or (abs(viol - best_viol) <= 1e-12):
            best_viol = viol
            best_U = U.copy()
        if np.max(np.abs(dU)) < config.tol:
            break

    status = ("optimal" if best_viol <= VIOLATION_OPTIMAL
              else "relaxed" if best_viol <= VIOLATION_ACCEPT
              else "infeasible")
    return PlanResult(controls=best_U, status=status, violation=best_viol,
                      sqp_iters=iters_done)


def _barrier(x: np.ndarray, view: ObstacleView, radius: float) -> float:
    dx = x[0] - view.x
    dy = x[1] - view.y
    rr = radius + view.radius
    return dx * dx + dy * dy - rr * rr


def _barrier_grad(x: np.ndarray, view: ObstacleView) -> np.ndarray:
    return np.array([2 * (x[0] - view.x), 2 * (x[1] - view.y), 0.0, 0.0])


def _doorway_reference(state: AgentState, goal) -> tuple | None:
    """Funnel through the gap: aim at the gap center until the wall plane
    is crossed, then at the goal."""
    if state.x < -0.05:
        return (0.0, 0.0)
    return None


def make_expert_controllers(spec: ScenarioSpec, config: MPCConfig):
    """One MPC controller per agent, with per-agent warm starts."""
    warm = [None] * len(spec.agents)
    funnel = spec.name.startswith("doorway")

    def make(i):
        def ctrl(snapshot: WorldSnapshot, idx: int):
            state = snapshot.states[idx]
            goal = spec.agents[idx].goal
            ref = _doorway_reference(state, goal) if funnel else None
            plan = mpc_plan(state, snapshot.views_for(idx), goal, config,
                            spec.limits, ego_radius=snapshot.radii[idx],
                            warm_start=warm[idx], reference_point=ref)
            warm[idx] = np.vstack([plan.controls[1:], plan.controls[-1:]])
            u = clamp_control(ControlInput(float(plan.controls[0, 0]),
                                           float(plan.controls[0, 1])), spec.limits)
            return u, plan.status
        return ctrl

    return [make(i) for i in range(len(spec.agents))]


def run_expert_episode(spec: ScenarioSpec, config: MPCConfig) -> TrajectoryLog:
    """All agents plan with the same MPC config in receding-horizon
    lockstep (apply the first control, re-plan every step)."""
    return run_episode(spec, make_expert_controllers(spec, config))


# -------------------------------------------------------------- dataset

TUNING_GRID = (
    ("default", {}),
    ("live-gentle", {"gamma_live": 0.15}),
    ("live-strong", {"gamma_live": 0.5}),
    ("pos-heavy", {"q_state": (25.0, 25.0, 1.0, 1.0), "q_terminal": (25.0, 25.0, 1.0, 1.0)}),
    ("live-strong-pos-heavy", {"gamma_live": 0.5,
                               "q_state": (25.0, 25.0, 1.0, 1.0),
                               "q_terminal": (25.0, 25.0, 1.0, 1.0)}),
)


def doorway_training_perturbations(seed: int, count: int = 36) -> list:
    """Seeded training variations of the doorway; the exact symmetric case
    never occurs (deterministic experts cannot break a perfect tie)."""
    rng = np.random.default_rng(seed)
    perts = []
    while len(perts) < count:
        start_offsets = [(round(rng.uniform(0.0, 0.5), 3), round(rng.uniform(-0.3, 0.3), 3))
                         for _ in range(2)]
        goal_offsets = [(0.0, round(rng.uniform(-0.4, 0.4), 3)) for _ in range(2)]
        headings = ["wall" if rng.random() < 0.2 else "path" for _ in range(2)]
        speeds = [0.0 if rng.random() < 0.25 else 0.3 for _ in range(2)]
        gap = float(rng.choice([0.3, 0.35, 0.4]))
        pert = Perturbation(start_offsets=start_offsets, goal_offsets=goal_offsets,
                            headings=headings, speeds=speeds, gap=gap,
                            label=f"train{len(perts):02d}")
        try:
            build_scenario("doorway", pert)
        except ValueError:
            continue
        perts.append(pert)
    return perts


def intersection_training_perturbations(seed: int, count: int = 16) -> list:
    rng = np.random.default_rng(seed + 1)
    perts = []
    while len(perts) < count:
        start_offsets = [(round(rng.uniform(0.0, 0.3), 3) * sx, round(rng.uniform(-0.05, 0.05), 3))
                         for sx in (1.0, 1.0)]
        # offsets are along each agent's own approach axis
        a0 = (start_offsets[0][0], start_offsets[0][1])
        a1 = (start_offsets[1][1], start_offsets[1][0])
        goal_offsets = [(round(rng.uniform(-0.2, 0.0), 3), 0.0), (0.0, round(rng.uniform(-0.2, 0.0), 3))]
        speeds = [0.3 if rng.random() < 0.3 else 0.0 for _ in range(2)]
        pert = Perturbation(start_offsets=[a0, a1], goal_offsets=goal_offsets,
                            headings=["path", "path"], speeds=speeds,
                            label=f"train{len(perts):02d}")
        try:
            build_scenario("intersection", pert)
        except ValueError:
            continue
        perts.append(pert)
    return perts


@dataclass
class EpisodeRecord:
    family: str
    label: str
    perturbation: Perturbation
    tried: list
    chosen: str | None
    kept: bool
    n_samples: int
    makespan: float


def _emit_samples(log: TrajectoryLog, spec: ScenarioSpec) -> list:
    samples = []
    n = len(spec.agents)
    radii = [a.radius for a in spec.agents]
    for t in range(log.n_steps):
        states = [AgentState(*log.states[t, i]) for i in range(n)]
        snap = WorldSnapshot(states=states, radii=radii, obstacles=spec.obstacles)
        for i in range(n):
            samples.append(TrainingSample(
                features=encode_observation(snap, i, spec.agents[i].goal),
                target=log.controls[t, i].copy(),
                ego=states[i],
                views=snap.views_for(i),
                ego_radius=radii[i],
            ))
    return samples


def generate_dataset(families=("doorway", "intersection"), seed: int = 0,
                     base_config: MPCConfig | None = None,
                     doorway_count: int = 36, intersection_count: int = 16):
    """Run the tuned expert over the training perturbations and emit one
    sample per agent per timestep from every feasible episode.

    Per perturbation a small grid of MPC configurations stands in for the
    hand tuning: the first collision-free, deadlock-free, goal-reaching
    episode is kept; perturbations with no feasible tuning are recorded as
    skipped (skips are data, not failures).
    """
    base = base_config or MPCConfig()
    samples = []
    records = []
    plans = []
    for family in families:
        if family == "doorway":
            perts = doorway_training_perturbations(seed, doorway_count)
        else:
            perts = intersection_training_perturbations(seed, intersection_count)
        for pert in perts:
            spec = build_scenario(family, pert)
            tried = []
            chosen = None
            kept_log = None
            for label, overrides in TUNING_GRID:
                cfg = replace(base, **overrides)
                log = run_expert_episode(spec, cfg)
                metrics = compute_metrics(log)
                tried.append(label)
                if metrics.success:
                    chosen = label
                    kept_log = log
                    break
            if kept_log is not None:
                new = _emit_samples(kept_log, spec)
                samples.extend(new)
                mk = float(np.max(kept_log.reach_times))
                records.append(EpisodeRecord(family, pert.label, pert, tried, chosen,
                                             True, len(new), mk))
                plans.append((spec, kept_log))
            else:
                records.append(EpisodeRecord(family, pert.label, pert, tried, None,
                                             False, 0, float("nan")))
    manifest = {
        "seed": seed,
        "families": list(families),
        "episodes": [
            {"family": r.family, "label": r.label,
             "perturbation": {
                 "start_offsets": [list(o) for o in r.perturbation.start_offsets],
                 "goal_offsets": [list(o) for o in r.perturbation.goal_offsets],
                 "headings": r.perturbation.headings,
                 "speeds": r.perturbation.speeds,
                 "gap": r.perturbation.gap},
             "tuning_tried": r.tried, "chosen": r.chosen, "kept": r.kept,
             "samples": r.n_samples,
             "makespan": None if math.isnan(r.makespan) else r.makespan}
            for r in records
        ],
        "n_samples": len(samples),
    }
    return samples, manifest, plans


# -------------------------------------------------------- dataset files

SAMPLE_COLUMNS = ("episode,step,agent,ego_x,ego_y,ego_theta,ego_v,"
                  "other_present,other_x,other_y,other_theta,other_v,other_radius,"
                  "goal_x,goal_y,target_omega,target_a")


def save_dataset(samples_path, manifest_path, plans, manifest):
    """Write the sample table and the manifest.

    The sample rows store the raw per-step world (ego state, the other
    agent, goal, applied control); static geometry lives once per episode
    in the manifest and is rejoined on load. Floats are written with repr
    so loading reproduces them bit for bit.
    """
    lines = [SAMPLE_COLUMNS]
    geometries = []
    for ep_index, (spec, log) in enumerate(plans):
        geometries.append({
            "name": spec.name,
            "obstacles": [[repr(float(v)) for v in row] for row in spec.obstacles],
            "radii": [a.radius for a in spec.agents],
            "goals": [list(a.goal) for a in spec.agents],
        })
        n = len(spec.agents)
        for t in range(log.n_steps):
            for i in range(n):
                ego = log.states[t, i]
                others = [j for j in range(n) if j != i]
                j = others[0] if others else -1
                if j >= 0:
                    o = log.states[t, j]
                    other = [1, repr(float(o[0])), repr(float(o[1])), repr(float(o[2])),
                             repr(float(o[3])), repr(float(spec.agents[j].radius))]
                else:
                    other = [0, "0.0", "0.0", "0.0", "0.0", "0.0"]
                u = log.controls[t, i]
                lines.append(",".join(map(str, [
                    ep_index, t, i,
                    repr(float(ego[0])), repr(float(ego[1])), repr(float(ego[2])), repr(float(ego[3])),
                    *other,
                    repr(float(spec.agents[i].goal[0])), repr(float(spec.agents[i].goal[1])),
                    repr(float(u[0])), repr(float(u[1])),
                ])))
    with open(samples_path, "w") as f:
        f.write("\n".join(lines) + "\n")
    manifest_out = dict(manifest)
    manifest_out["geometries"] = geometries
    with open(manifest_path, "w") as f:
        json.dump(manifest_out, f, indent=1, sort_keys=True)
        f.write("\n")


def load_dataset(samples_path, manifest_path):
    """Rebuild TrainingSamples (including encodings) from the two files."""
    with open(manifest_path) as f:
        manifest = json.load(f)
    geoms = []
    for g in manifest["geometries"]:
        obstacles = np.array([[float(v) for v in row] for row in g["obstacles"]])
        if obstacles.size == 0:
            obstacles = obstacles.reshape(0, 3)
        geoms.append({"obstacles": obstacles, "radii": g["radii"], "goals": g["goals"]})
    samples = []
    with open(samples_path) as f:
        header = f.readline().strip()
        if header != SAMPLE_COLUMNS:
            raise ValueError("unrecognized dataset header")
        for line in f:
            parts = line.strip().split(",")
            ep = int(parts[0])
            agent = int(parts[2])
            ego = AgentState(float(parts[3]), float(parts[4]), float(parts[5]), float(parts[6]))
            other_present = int(parts[7]) == 1
            geom = geoms[ep]
            states = [ego]
            radii = [geom["radii"][agent]]
            if other_present:
                states.append(AgentState(float(parts[8]), float(parts[9]),
                                         float(parts[10]), float(parts[11])))
                radii.append(float(parts[12]))
            snap = WorldSnapshot(states=states, radii=radii, obstacles=geom["obstacles"])
            goal = (float(parts[13]), float(parts[14]))
            target = np.array([float(parts[15]), float(parts[16])])
            samples.append(TrainingSample(
                features=encode_observation(snap, 0, goal),
                target=target,
                ego=ego,
                views=snap.views_for(0),
                ego_radius=radii[0],
            ))
    return samples, manifest
