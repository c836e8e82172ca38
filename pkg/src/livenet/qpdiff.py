"""Dense 2-variable QP with linear inequality rows, solved exactly by
active-set enumeration, plus an analytic backward pass through the KKT
conditions so reference and penalty heads upstream are trainable.

The projection solved each control cycle is

    min_u 1/2 (u - u_ref)^T W (u - u_ref)   s.t.  g_k . u <= h_k

With 2 decision variables and generic-position rows, at most two rows are
simultaneously active at the optimum, so trying the unconstrained solution,
every single row and every row pair finds the exact optimum. If the rows are
primal infeasible, the problem is re-solved with one shared quadratic slack
on all non-bound rows (safety rows bend before control limits break).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .cbf import ConstraintRow

log = logging.getLogger(__name__)

FEAS_TOL = 1e-9
LAMBDA_TOL = 1e-10
SLACK_WEIGHT = 1e4


@dataclass
class QPProblem:
    u_ref: np.ndarray
    rows: list
    weight: np.ndarray = field(default_factory=lambda: np.eye(2))


@dataclass
class QPResult:
    u_star: np.ndarray
    lambdas: np.ndarray
    active_set: tuple
    status: str  # "optimal" | "relaxed" | "infeasible"
    slack: float = 0.0


def kkt_solve(H: np.ndarray, x_ref_term: np.ndarray, G_act: np.ndarray, h_act: np.ndarray):
    """Solve the equality-constrained QP KKT system.

    min 1/2 x^T H x - x_ref_term^T x  s.t.  G_act x = h_act.
    Returns (x, lam) or None when the system is singular.
    """
    n = H.shape[0]
    m = G_act.shape[0]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = H
    if m:
        K[:n, n:] = G_act.T
        K[n:, :n] = G_act
    rhs = np.concatenate([x_ref_term, h_act])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(sol)):
        return None
    return sol[:n], sol[n:]


def _enumerate(H: np.ndarray, x_ref_term: np.ndarray, G: np.ndarray, h: np.ndarray,
               candidates: list, max_active: int):
    """Exhaustive active-set search over the candidate row indices.

    Every KKT-consistent candidate (primal feasible w.r.t. all rows,
    multipliers nonnegative) is scored by its objective; the best one wins.
    Returns (x, lam_full, active) or None when no candidate is feasible.
    """
    n = H.shape[0]
    best = None
    best_obj = np.inf
    for size in range(0, max_active + 1):
        for combo in combinations(candidates, size):
            idx = list(combo)
            sol = kkt_solve(H, x_ref_term, G[idx], h[idx])
            if sol is None:
                continue
            x, lam = sol
            if np.any(lam < -LAMBDA_TOL):
                continue
            if G.shape[0] and np.max(G @ x - h) > FEAS_TOL:
                continue
            obj = 0.5 * x @ H @ x - x_ref_term @ x
            if obj < best_obj - 1e-14:
                best_obj = obj
                lam_full = np.zeros(G.shape[0])
                lam_full[idx] = np.maximum(lam, 0.0)
                best = (x, lam_full, tuple(i for i, l in zip(idx, lam) if l > LAMBDA_TOL))
    return best


def _box_from_bounds(rows):
    """Per-variable reach of the control box implied by the bound rows, or
    None when no box is present (then no pruning happens)."""
    hi = np.full(2, np.inf)
    lo = np.full(2, -np.inf)
    found = False
    for row in rows:
        if row.kind != "bound":
            continue
        found = True
        for k in range(2):
            if row.g[k] > 0.5:
                hi[k] = min(hi[k], row.h / row.g[k])
            elif row.g[k] < -0.5:
                lo[k] = max(lo[k], -row.h / (-row.g[k]))
    if not found or not np.all(np.isfinite(hi)) or not np.all(np.isfinite(lo)):
        return None
    return lo, hi


def solve_qp(problem: QPProblem) -> QPResult:
    """Exact optimum of the 2-variable row-constrained projection.

    Rows that cannot be violated anywhere inside the control box are pruned
    from the enumeration (they can never be active); the bound rows
    themselves always stay. On primal infeasibility the non-bound rows get
    one shared quadratic slack and the result is flagged "relaxed".
    """
    rows = problem.rows
    W = problem.weight
    u_ref = np.asarray(problem.u_ref, dtype=float)
    n_rows = len(rows)
    if n_rows == 0:
        return QPResult(u_star=u_ref.copy(), lambdas=np.zeros(0), active_set=(), status="optimal")

    G = np.array([row.g for row in rows], dtype=float)
    h = np.array([row.h for row in rows], dtype=float)

    # Fast path: the unconstrained minimizer is u_ref itself; if feasible it
    # is globally optimal and nothing needs enumerating.
    if np.max(G @ u_ref - h) <= FEAS_TOL:
        return QPResult(u_star=u_ref.copy(), lambdas=np.zeros(n_rows),
                        active_set=(), status="optimal")

    box = _box_from_bounds(rows)
    if box is not None:
        lo, hi = box
        # max of g.u over the box; rows with max <= h can never bind
        reach = np.where(G > 0, G * hi, G * lo).sum(axis=1)
        candidates = [k for k in range(n_rows) if reach[k] > h[k] - 1e-12 or rows[k].kind == "bound"]
    else:
        candidates = list(range(n_rows))

    x_ref_term = W @ u_ref
    best = _enumerate(W, x_ref_term, G, h, candidates, max_active=2)
    if best is not None:
        u, lam, active = best
        return QPResult(u_star=u, lambdas=lam, active_set=active, status="optimal")

    # Infeasible: shared slack s >= 0 on every non-bound row, penalized by
    # 1/2 * SLACK_WEIGHT * s^2; bound rows stay hard.
    H3 = np.zeros((3, 3))
    H3[:2, :2] = W
    H3[2, 2] = SLACK_WEIGHT
    ref3 = np.concatenate([x_ref_term, [0.0]])
    relaxable = np.array([row.kind != "bound" for row in rows])
    G3 = np.hstack([G, -relaxable.astype(float)[:, None]])
    G3 = np.vstack([G3, [0.0, 0.0, -1.0]])  # s >= 0
    h3 = np.concatenate([h, [0.0]])
    cand3 = list(range(G3.shape[0]))
    best = _enumerate(H3, ref3, G3, h3, cand3, max_active=3)
    if best is None:
        return QPResult(u_star=u_ref.copy(), lambdas=np.zeros(n_rows),
                        active_set=(), status="infeasible")
    x3, lam3, active3 = best
    return QPResult(u_star=x3[:2], lambdas=lam3[:n_rows],
                    active_set=tuple(i for i in active3 if i < n_rows),
                    status="relaxed", slack=float(x3[2]))


def qp_backward(problem: QPProblem, result: QPResult, grad_u: np.ndarray):
    """Gradients of a scalar loss through the QP solution.

    Implicit differentiation of the active-set KKT system
        [W  G_A^T] [du*  ]   [W du_ref]
        [G_A  0  ] [dlam ] = [dh_A    ]
    gives grad_u_ref and per-row grad_h; inactive rows have exactly zero
    h-gradient. Rows with multipliers inside the strict-complementarity
    tolerance are treated as inactive. A singular reduced system yields zero
    gradients for the sample (logged).
    """
    if result.status != "optimal":
        raise ValueError("qp_backward requires an optimal solve")
    W = problem.weight
    grad_u = np.asarray(grad_u, dtype=float)
    n_rows = len(problem.rows)
    grad_h = np.zeros(n_rows)
    active = [k for k in result.active_set if result.lambdas[k] > LAMBDA_TOL]
    if not active:
        # unconstrained: u* = u_ref identically, so the Jacobian is I
        return grad_u.copy(), grad_h

    G_act = np.array([problem.rows[k].g for k in active], dtype=float)
    m = len(active)
    K = np.zeros((2 + m, 2 + m))
    K[:2, :2] = W
    K[:2, 2:] = G_act.T
    K[2:, :2] = G_act
    rhs = np.concatenate([grad_u, np.zeros(m)])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        log.warning("singular reduced KKT system in qp_backward; zero gradients")
        return np.zeros(2), grad_h
    grad_u_ref = W @ sol[:2]
    for j, k in enumerate(active):
        grad_h[k] = sol[2 + j]
    return grad_u_ref, grad_h
