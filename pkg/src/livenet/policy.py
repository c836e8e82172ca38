"""The neural controller: observation encoding, a three-headed MLP
producing the reference control and the CBF penalties, its composition with
the constraint builder and the differentiable QP into one control step, and
the supervised training loop.

The network is a single 256-unit trunk followed by three parallel 64-unit
heads (reference control, obstacle penalties, liveness penalties) with
rectifier activations, trained end to end: gradients reach the penalty
heads through the QP right-hand sides and the reference head through the
QP solution map.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .cbf import PenaltyValues, build_all_rows, obstacle_barrier, obstacle_lie_derivatives
from .dynamics import AgentState, ControlInput, KinodynamicLimits, clamp_control
from .qpdiff import QPProblem, qp_backward, solve_qp
from .sim import WorldSnapshot

CHECKPOINT_VERSION = 1
K_NEAREST_DEFAULT = 6
PENALTY_FLOOR = 1e-3
TRUNK_UNITS = 256
HEAD_UNITS = 64


def encoding_dim(k_nearest: int = K_NEAREST_DEFAULT) -> int:
    return 10 + 3 * k_nearest


def encode_observation(snapshot: WorldSnapshot, ego_index: int, goal,
                       k_nearest: int = K_NEAREST_DEFAULT) -> np.ndarray:
    """Fixed-width ego-frame feature vector.

    Layout: [goal distance, sin/cos of the goal bearing error, own speed,
    nearest other agent (rel x, rel y, sin/cos rel heading, speed, presence),
    then the k nearest static obstacle points (rel x, rel y, presence)].
    All positions are rotated into the ego frame, so the encoding is
    invariant to world translation and rotation.
    """
    ego = snapshot.states[ego_index]
    c, s = math.cos(ego.theta), math.sin(ego.theta)

    def to_ego(px, py):
        dx, dy = px - ego.x, py - ego.y
        return c * dx + s * dy, -s * dx + c * dy

    feat = np.zeros(encoding_dim(k_nearest))
    gx, gy = to_ego(goal[0], goal[1])
    dist = math.hypot(gx, gy)
    bearing = math.atan2(gy, gx) if dist > 1e-9 else 0.0
    feat[0] = dist
    feat[1] = math.sin(bearing)
    feat[2] = math.cos(bearing)
    feat[3] = ego.v

    others = [(j, st) for j, st in enumerate(snapshot.states) if j != ego_index]
    if others:
        j, other = min(others, key=lambda p: math.hypot(p[1].x - ego.x, p[1].y - ego.y))
        ox, oy = to_ego(other.x, other.y)
        rel_th = other.theta - ego.theta
        feat[4:10] = [ox, oy, math.sin(rel_th), math.cos(rel_th), other.v, 1.0]

    if len(snapshot.obstacles):
        d = np.hypot(snapshot.obstacles[:, 0] - ego.x, snapshot.obstacles[:, 1] - ego.y)
        order = np.argsort(d, kind="stable")[:k_nearest]
        for slot, idx in enumerate(order):
            ox, oy = to_ego(snapshot.obstacles[idx, 0], snapshot.obstacles[idx, 1])
            feat[10 + 3 * slot: 13 + 3 * slot] = [ox, oy, 1.0]
    return feat


# ------------------------------------------------------------------- network

HEADS = ("r", "o", "l")


@dataclass
class NetworkParams:
    k_nearest: int
    weights: dict  # name -> ndarray

    @classmethod
    def init(cls, seed: int, k_nearest: int = K_NEAREST_DEFAULT) -> "NetworkParams":
        rng = np.random.default_rng(seed)
        d = encoding_dim(k_nearest)
        w = {}
        w["W0"] = rng.normal(0.0, math.sqrt(2.0 / d), (d, TRUNK_UNITS))
        w["b0"] = np.zeros(TRUNK_UNITS)
        for head in HEADS:
            w[f"W1{head}"] = rng.normal(0.0, math.sqrt(2.0 / TRUNK_UNITS), (TRUNK_UNITS, HEAD_UNITS))
            w[f"b1{head}"] = np.zeros(HEAD_UNITS)
            w[f"W2{head}"] = rng.normal(0.0, math.sqrt(1.0 / HEAD_UNITS), (HEAD_UNITS, 2))
            w[f"b2{head}"] = np.zeros(2)
        return cls(k_nearest=k_nearest, weights=w)


def save_params(params: NetworkParams, path):
    meta = json.dumps({"version": CHECKPOINT_VERSION, "k_nearest": params.k_nearest,
                       "input_dim": encoding_dim(params.k_nearest)})
    np.savez(path, __meta__=np.frombuffer(meta.encode(), dtype=np.uint8), **params.weights)


def load_params(path) -> NetworkParams:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        weights = {k: data[k] for k in data.files if k != "__meta__"}
    return NetworkParams(k_nearest=meta["k_nearest"], weights=weights)


def softplus(x):
    return np.logaddexp(0.0, x)


def _forward_batch(params: NetworkParams, X: np.ndarray):
    """Batched forward pass returning raw head outputs plus the cache
    needed for backpropagation."""
    w = params.weights
    h0 = X @ w["W0"] + w["b0"]
    a0 = np.maximum(h0, 0.0)
    cache = {"X": X, "h0": h0, "a0": a0}
    out = {}
    for head in HEADS:
        h1 = a0 @ w[f"W1{head}"] + w[f"b1{head}"]
        a1 = np.maximum(h1, 0.0)
        y = a1 @ w[f"W2{head}"] + w[f"b2{head}"]
        cache[f"h1{head}"] = h1
        cache[f"a1{head}"] = a1
        out[head] = y
    return out, cache


def _backward_batch(params: NetworkParams, cache: dict, grad_out: dict):
    """Gradients of sum-over-batch losses w.r.t. every weight, plus the
    input gradient (used by the encoding Jacobian checks)."""
    w = params.weights
    grads = {}
    a0 = cache["a0"]
    grad_a0 = np.zeros_like(a0)
    for head in HEADS:
        gy = grad_out[head]
        a1 = cache[f"a1{head}"]
        grads[f"W2{head}"] = a1.T @ gy
        grads[f"b2{head}"] = gy.sum(axis=0)
        ga1 = gy @ w[f"W2{head}"].T
        gh1 = ga1 * (cache[f"h1{head}"] > 0.0)
        grads[f"W1{head}"] = a0.T @ gh1
        grads[f"b1{head}"] = gh1.sum(axis=0)
        grad_a0 += gh1 @ w[f"W1{head}"].T
    gh0 = grad_a0 * (cache["h0"] > 0.0)
    grads["W0"] = cache["X"].T @ gh0
    grads["b0"] = gh0.sum(axis=0)
    grad_X = gh0 @ w["W0"].T
    return grads, grad_X


def _split_outputs(out: dict):
    """Map raw head outputs to (u_ref, penalties) for a batch."""
    u_ref = out["r"]
    p_o = softplus(out["o"]) + PENALTY_FLOOR
    p_l = softplus(out["l"]) + PENALTY_FLOOR
    return u_ref, p_o, p_l


def forward(params: NetworkParams, x: np.ndarray):
    """Single-sample forward pass: reference control and positive penalties."""
    out, _ = _forward_batch(params, x[None, :])
    u_ref, p_o, p_l = _split_outputs(out)
    return (ControlInput(float(u_ref[0, 0]), float(u_ref[0, 1])),
            PenaltyValues(p_o1=float(p_o[0, 0]), p_o2=float(p_o[0, 1]),
                          p_l_fast=float(p_l[0, 0]), p_l_slow=float(p_l[0, 1])))


# ---------------------------------------------------------------- controller

def controller_step(params: NetworkParams, snapshot: WorldSnapshot, ego_index: int,
                    goal, limits: KinodynamicLimits, liveness: bool = True):
    """One control cycle: encode, predict, build rows, project, clamp.

    With liveness=False the liveness rows are dropped, which reproduces the
    plain safety-filter ablation. Returns (control, qp_status); an
    infeasible projection falls back to an emergency brake.
    """
    ego = snapshot.states[ego_index]
    x = encode_observation(snapshot, ego_index, goal, params.k_nearest)
    u_ref, penalties = forward(params, x)
    views = snapshot.views_for(ego_index)
    rows = build_all_rows(ego, snapshot.radii[ego_index], views, penalties, limits)
    if not liveness:
        rows = [r for r in rows if r.kind != "liveness"]
    result = solve_qp(QPProblem(u_ref=np.array([u_ref.omega, u_ref.a]), rows=rows))
    if result.status == "infeasible":
        return ControlInput(0.0, -limits.a_max), "infeasible"
    u = clamp_control(ControlInput(float(result.u_star[0]), float(result.u_star[1])), limits)
    return u, result.status


def make_controller(params: NetworkParams, spec, liveness: bool = True):
    """Per-agent controller callables for sim.run_episode."""
    goals = [a.goal for a in spec.agents]

    def ctrl(snapshot: WorldSnapshot, i: int):
        return controller_step(params, snapshot, i, goals[i], spec.limits, liveness=liveness)

    return [ctrl for _ in spec.agents]


def loss(predicted: ControlInput, target: ControlInput) -> float:
    """Mean squared error over the two control components."""
    return 0.5 * ((predicted.omega - target.omega) ** 2 + (predicted.a - target.a) ** 2)


# ------------------------------------------------------------------ training

@dataclass
class TrainingSample:
    features: np.ndarray
    target: np.ndarray          # (omega, a), within control bounds
    ego: AgentState
    views: list                 # ObstacleViews at the recorded instant
    ego_radius: float


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0
    liveness: bool = True
    limits: KinodynamicLimits = field(default_factory=KinodynamicLimits)


def _sample_forward_qp(sample: TrainingSample, u_ref: np.ndarray, p_o, p_l,
                       limits: KinodynamicLimits, liveness: bool):
    penalties = PenaltyValues(p_o1=float(p_o[0]), p_o2=float(p_o[1]),
                              p_l_fast=float(p_l[0]), p_l_slow=float(p_l[1]))
    rows = build_all_rows(sample.ego, sample.ego_radius, sample.views, penalties, limits)
    if not liveness:
        rows = [r for r in rows if r.kind != "liveness"]
    problem = QPProblem(u_ref=u_ref, rows=rows)
    return problem, solve_qp(problem), penalties


def _route_h_gradients(sample: TrainingSample, problem: QPProblem, grad_h: np.ndarray,
                       penalties: PenaltyValues):
    """Chain QP right-hand-side gradients into the penalty outputs.

    Obstacle rows: h = Lf2 + (p1 + p2) Lf + p1 p2 b, so dh/dp1 = Lf + p2 b
    and dh/dp2 = Lf + p1 b. Liveness rows: h = p_l * gap with the head
    selected by the crossing order, so dh/dp_l = gap = h / p_l.
    """
    g_po = np.zeros(2)
    g_pl = np.zeros(2)
    for k, row in enumerate(problem.rows):
        gh = grad_h[k]
        if gh == 0.0:
            continue
        if row.kind == "obstacle":
            view = sample.views[int(row.source_id[3:])]
            b = obstacle_barrier(sample.ego, view, sample.ego_radius)
            lfb, _, _ = obstacle_lie_derivatives(sample.ego, view)
            g_po[0] += gh * (lfb + penalties.p_o2 * b)
            g_po[1] += gh * (lfb + penalties.p_o1 * b)
        elif row.kind == "liveness":
            if row.h > 0.0:       # ego passes first: fast head was used
                g_pl[0] += gh * (row.h / penalties.p_l_fast)
            elif row.h < 0.0:     # ego yields: slow head
                g_pl[1] += gh * (row.h / penalties.p_l_slow)
    return g_po, g_pl


def _batch_loss_and_grads(params: NetworkParams, samples: list, config: TrainConfig,
                          compute_grads: bool = True):
    """Mean imitation loss over the batch and summed parameter gradients.

    Samples whose projection is not strictly optimal (relaxed or
    infeasible) contribute to the reported loss but not to the gradient.
    """
    X = np.stack([s.features for s in samples])
    out, cache = _forward_batch(params, X)
    u_ref, p_o, p_l = _split_outputs(out)
    B = len(samples)
    grad_r = np.zeros((B, 2))
    grad_po = np.zeros((B, 2))
    grad_pl = np.zeros((B, 2))
    total = 0.0
    skipped = 0
    for i, sample in enumerate(samples):
        problem, result, penalties = _sample_forward_qp(
            sample, u_ref[i], p_o[i], p_l[i], config.limits, config.liveness)
        err = result.u_star - sample.target
        total += 0.5 * float(err @ err)
        if not compute_grads:
            continue
        if result.status != "optimal":
            skipped += 1
            continue
        grad_u = err  # d/du of 0.5 * ||u - target||^2
        g_ref, grad_h = qp_backward(problem, result, grad_u)
        grad_r[i] = g_ref
        g_po, g_pl = _route_h_gradients(sample, problem, grad_h, penalties)
        grad_po[i] = g_po
        grad_pl[i] = g_pl
    mean_loss = total / B
    if not compute_grads:
        return mean_loss, None, skipped
    # chain through the positive map p = softplus(raw) + floor
    sig_o = 1.0 / (1.0 + np.exp(-out["o"]))
    sig_l = 1.0 / (1.0 + np.exp(-out["l"]))
    grad_out = {"r": grad_r / B, "o": grad_po * sig_o / B, "l": grad_pl * sig_l / B}
    grads, _ = _backward_batch(params, cache, grad_out)
    return mean_loss, grads, skipped


class _Adam:
    def __init__(self, weights: dict, lr: float):
        self.lr = lr
        self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8
        self.m = {k: np.zeros_like(v) for k, v in weights.items()}
        self.v = {k: np.zeros_like(v) for k, v in weights.items()}
        self.t = 0

    def step(self, weights: dict, grads: dict):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            weights[k] -= self.lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)


def train(samples: list, config: TrainConfig, params: NetworkParams | None = None):
    """Supervised imitation training with per-epoch shuffling.

    Returns (params, history) where history is the per-epoch mean loss.
    Aborts on a non-finite loss.
    """
    if not samples:
        raise ValueError("training dataset is empty")
    if params is None:
        params = NetworkParams.init(seed=config.seed)
    rng = np.random.default_rng(config.seed)
    opt = _Adam(params.weights, config.lr)
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(samples))
        epoch_loss = 0.0
        n_batches = 0
        for lo in range(0, len(samples), config.batch_size):
            batch = [samples[k] for k in order[lo: lo + config.batch_size]]
            mean_loss, grads, _ = _batch_loss_and_grads(params, batch, config)
            if not math.isfinite(mean_loss):
                raise RuntimeError(f"non-finite loss at epoch {epoch}, batch {n_batches}")
            opt.step(params.weights, grads)
            epoch_loss += mean_loss
            n_batches += 1
        history.append(epoch_loss / max(n_batches, 1))
    return params, history
