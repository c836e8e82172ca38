import numpy as np
import pytest

from livenet.cbf import ConstraintRow
from livenet.qpdiff import QPProblem, QPResult, qp_backward, solve_qp


def row(g, h, kind="obstacle", source="r"):
    return ConstraintRow(g=np.array(g, dtype=float), h=float(h), kind=kind, source_id=source)


def box_rows(omega_max=0.5, a_max=0.1):
    return [row([1, 0], omega_max, "bound"), row([-1, 0], omega_max, "bound"),
            row([0, 1], a_max, "bound"), row([0, -1], a_max, "bound")]


def random_problem(rng, n_rows=5, ensure_feasible=True):
    u_ref = rng.uniform(-0.5, 0.5, 2)
    rows = []
    for k in range(n_rows):
        g = rng.uniform(-1, 1, 2)
        while np.linalg.norm(g) < 0.1:
            g = rng.uniform(-1, 1, 2)
        h = rng.uniform(-0.3, 0.8)
        if ensure_feasible and h < 0.05 * np.linalg.norm(g):
            # keep the origin feasible so the rows always intersect
            h = abs(h) + 0.05
        rows.append(row(g, h, source=f"r{k}"))
    return QPProblem(u_ref=u_ref, rows=rows)


def kkt_residuals(problem, result):
    W = problem.weight
    G = np.array([r.g for r in problem.rows])
    h = np.array([r.h for r in problem.rows])
    stat = W @ (result.u_star - problem.u_ref) + G.T @ result.lambdas
    comp = np.abs(result.lambdas * (G @ result.u_star - h))
    feas = G @ result.u_star - h
    return np.linalg.norm(stat), comp.max() if len(comp) else 0.0, feas.max() if len(feas) else 0.0


def test_unconstrained_identity():
    res = solve_qp(QPProblem(u_ref=np.array([0.1, 0.05]), rows=[]))
    assert res.status == "optimal"
    assert res.u_star == pytest.approx([0.1, 0.05])
    assert res.active_set == ()


def test_single_halfspace_projection():
    res = solve_qp(QPProblem(u_ref=np.array([0.1, 0.05]), rows=[row([1, 0], 0.05)]))
    assert res.status == "optimal"
    assert res.u_star == pytest.approx([0.05, 0.05])
    assert res.lambdas[0] == pytest.approx(0.05)
    assert res.active_set == (0,)


def test_liveness_braking_projection():
    # yield-branch doorway row: (0, d/v^2) . u <= p (t_j - t_i) < 0
    g = np.array([0.0, 1.0 / 0.3 ** 2])
    h = -0.04
    res = solve_qp(QPProblem(u_ref=np.array([0.0, 0.1]), rows=[row(g, h, "liveness")] + box_rows()))
    assert res.status == "optimal"
    assert res.u_star[1] == pytest.approx(h / g[1])
    assert res.u_star[1] < 0


def test_kkt_invariants_random(seed=9, n=300):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        prob = random_problem(rng)
        res = solve_qp(prob)
        assert res.status == "optimal"
        stat, comp, feas = kkt_residuals(prob, res)
        assert stat <= 1e-8
        assert comp <= 1e-8
        assert feas <= 1e-9


def test_objective_not_worse_than_feasible_grid():
    rng = np.random.default_rng(10)
    for _ in range(50):
        prob = random_problem(rng)
        res = solve_qp(prob)
        G = np.array([r.g for r in prob.rows])
        h = np.array([r.h for r in prob.rows])
        obj_star = np.sum((res.u_star - prob.u_ref) ** 2)
        us = rng.uniform(-1.5, 1.5, (500, 2))
        feas = us[(us @ G.T <= h + 1e-12).all(axis=1)]
        if len(feas):
            assert obj_star <= np.min(np.sum((feas - prob.u_ref) ** 2, axis=1)) + 1e-9


def test_determinism_bit_identical():
    rng = np.random.default_rng(11)
    prob = random_problem(rng)
    r1 = solve_qp(prob)
    r2 = solve_qp(prob)
    assert np.array_equal(r1.u_star, r2.u_star)
    assert np.array_equal(r1.lambdas, r2.lambdas)
    assert r1.active_set == r2.active_set


def test_infeasible_rows_relaxed_but_bounds_hard():
    rows = [row([0, 1], -0.5, "liveness")] + box_rows()  # a <= -0.5 conflicts a >= -0.1
    res = solve_qp(QPProblem(u_ref=np.array([0.0, 0.0]), rows=rows))
    assert res.status == "relaxed"
    assert res.u_star[1] >= -0.1 - 1e-9
    assert res.slack > 0


def test_infeasible_bounds_reported():
    rows = [row([0, 1], -0.2, "bound"), row([0, -1], -0.2, "bound")]
    res = solve_qp(QPProblem(u_ref=np.zeros(2), rows=rows))
    assert res.status == "infeasible"


# ----------------------------------------------------------------- backward

def fd_grads(prob, grad_u, eps=1e-6):
    """Central finite differences of grad_u . u*(u_ref, h)."""
    def value(u_ref, hs):
        rows = [ConstraintRow(g=r.g, h=hk, kind=r.kind, source_id=r.source_id)
                for r, hk in zip(prob.rows, hs)]
        res = solve_qp(QPProblem(u_ref=u_ref, rows=rows, weight=prob.weight))
        return grad_u @ res.u_star, res.active_set, res.status

    h0 = np.array([r.h for r in prob.rows])
    g_ref = np.zeros(2)
    stable = True
    for k in range(2):
        d = np.zeros(2)
        d[k] = eps
        vp, ap, sp = value(prob.u_ref + d, h0)
        vm, am, sm = value(prob.u_ref - d, h0)
        stable &= (ap == am) and sp == sm == "optimal"
        g_ref[k] = (vp - vm) / (2 * eps)
    g_h = np.zeros(len(prob.rows))
    for k in range(len(prob.rows)):
        hp, hm = h0.copy(), h0.copy()
        hp[k] += eps
        hm[k] -= eps
        vp, ap, sp = value(prob.u_ref, hp)
        vm, am, sm = value(prob.u_ref, hm)
        stable &= (ap == am) and sp == sm == "optimal"
        g_h[k] = (vp - vm) / (2 * eps)
    return g_ref, g_h, stable


def test_backward_no_active_rows():
    prob = QPProblem(u_ref=np.array([0.05, 0.02]), rows=box_rows())
    res = solve_qp(prob)
    grad_ref, grad_h = qp_backward(prob, res, np.array([1.0, -2.0]))
    assert grad_ref == pytest.approx([1.0, -2.0])
    assert np.all(grad_h == 0.0)


def test_backward_single_active_row_hand_values():
    prob = QPProblem(u_ref=np.array([0.2, 0.0]), rows=[row([1, 0], 0.05)])
    res = solve_qp(prob)
    assert res.active_set == (0,)
    grad_ref, grad_h = qp_backward(prob, res, np.array([1.0, 0.0]))
    # u*_1 = h exactly: du*_1/dh = 1, du*_1/du_ref_1 = 0
    assert grad_h[0] == pytest.approx(1.0)
    assert grad_ref == pytest.approx([0.0, 0.0])


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(12)
    checked = 0
    while checked < 500:
        prob = random_problem(rng, n_rows=4)
        res = solve_qp(prob)
        if res.status != "optimal":
            continue
        if any(0 < res.lambdas[k] < 1e-6 for k in range(len(prob.rows))):
            continue  # nearly degenerate multiplier; FD would be unstable
        grad_u = rng.uniform(-1, 1, 2)
        try:
            g_ref, g_h = qp_backward(prob, res, grad_u)
        except ValueError:
            continue
        fd_ref, fd_h, stable = fd_grads(prob, grad_u)
        if not stable:
            continue
        assert g_ref == pytest.approx(fd_ref, rel=1e-4, abs=1e-7)
        assert g_h == pytest.approx(fd_h, rel=1e-4, abs=1e-7)
        checked += 1


def test_backward_inactive_rows_zero_gradient():
    rng = np.random.default_rng(13)
    for _ in range(100):
        prob = random_problem(rng)
        res = solve_qp(prob)
        if res.status != "optimal":
            continue
        _, g_h = qp_backward(prob, res, rng.uniform(-1, 1, 2))
        for k in range(len(prob.rows)):
            if k not in res.active_set:
                assert g_h[k] == 0.0


def test_backward_requires_optimal():
    rows = [row([0, 1], -0.5, "liveness")] + box_rows()
    prob = QPProblem(u_ref=np.zeros(2), rows=rows)
    res = solve_qp(prob)
    assert res.status == "relaxed"
    with pytest.raises(ValueError):
        qp_backward(prob, res, np.ones(2))
