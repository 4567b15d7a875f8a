"""
외부 반복 솔버 테스트
ADMM (정확), CCD, LMCCD, RCG, ISTA/FISTA, SCD-MM
"""

import math

import numpy as np
import pytest

from harness import relative_error
from operators import dense_operator, diff1d, identity
from solvers import (admm_exact, ccd_solve, fista_solve, ista_solve,
                     lmccd_solve, rcg_solve, relative_change, scd_mm_solve)


@pytest.fixture(scope="module")
def oracle(tv_instance):
    """정확한 ADMM 을 충분히 돌린 기준 해 (u*, z*, b*)"""
    p = tv_instance
    state, record = admm_exact(p["a_op"], p["b_op"], p["d"], p["alpha"], p["lam"],
                               max_iters=100000, tol=1e-12)
    assert record.status == "converged"
    return state


def _args(p):
    return p["a_op"], p["b_op"], p["d"], p["alpha"], p["lam"]


def _collect(snapshots):
    return lambda snap: snapshots.append(
        (snap.u.copy(), None if snap.z is None else snap.z.copy(), None if snap.b is None else snap.b.copy())
    )


# ================================
# 보조
# ================================

def test_relative_change_zero_reference():
    assert relative_change(np.array([3.0, 4.0]), np.zeros(2)) == 5.0
    assert relative_change(np.array([2.0]), np.array([1.0])) == 1.0


# ================================
# ADMM (정확)
# ================================

def test_admm_tiny_l1_example():
    state, _ = admm_exact(identity(3), identity(3), np.array([2.0, 0.1, -2.0]), 1.0, 1.0,
                          max_iters=5000, tol=1e-15)
    np.testing.assert_allclose(state.u, [1.0, 0.0, -1.0], atol=1e-6)


def test_admm_first_iteration_recovers_flat_model(rng):
    u_star = np.full(30, 1.5)
    a_op = dense_operator(rng.standard_normal((40, 30)))
    state, record = admm_exact(a_op, diff1d(30), a_op.apply(u_star), 1.0, 1.0, max_iters=1)
    assert len(record) == 1
    np.testing.assert_allclose(state.u, u_star, rtol=1e-10)
    np.testing.assert_allclose(state.z, 0.0, atol=1e-10)


def test_admm_lyapunov_descent(tv_instance, oracle):
    snapshots = []
    admm_exact(*_args(tv_instance), max_iters=200, callback=_collect(snapshots))
    z_star, b_star = oracle.z, oracle.b
    v0 = float(z_star @ z_star + b_star @ b_star)
    values = [float(np.sum((z - z_star) ** 2) + np.sum((b - b_star) ** 2)) for _, z, b in snapshots]
    for prev, cur in zip([v0] + values[:-1], values):
        assert cur <= prev + 1e-10 * v0


def test_admm_cost_accounting(tv_instance):
    _, record = admm_exact(*_args(tv_instance), max_iters=20)
    for k, row in enumerate(record.rows, start=1):
        assert (row["ops_A"], row["ops_At"]) == (30, k)


def test_admm_stops_at_budget(tv_instance):
    """F 구체화 30회 + 반복당 Aᵀ 1회: 예산 40 이면 10회"""
    state, record = admm_exact(*_args(tv_instance), max_iters=1000, budget=40)
    assert record.status == "budget"
    assert len(record) == 10
    assert (record.last["ops_A"], record.last["ops_At"]) == (30, 10)


def test_admm_budget_below_factorization_cost(tv_instance):
    state, record = admm_exact(*_args(tv_instance), max_iters=10, budget=30)
    assert record.status == "budget"
    assert len(record) == 0
    np.testing.assert_array_equal(state.u, np.zeros(30))


def test_admm_rejects_bad_parameters(tv_instance):
    p = tv_instance
    with pytest.raises(ValueError):
        admm_exact(p["a_op"], p["b_op"], p["d"], 0.0, 1.0, 5)
    with pytest.raises(ValueError):
        admm_exact(p["a_op"], diff1d(10), p["d"], 1.0, 1.0, 5)


# ================================
# 압축 켤레 방향
# ================================

def test_ccd_matches_oracle(fast_admm_instance):
    args = _args(fast_admm_instance)
    oracle, record = admm_exact(*args, max_iters=100000, tol=1e-14)
    assert record.status == "converged"
    admm_state, _ = admm_exact(*args, max_iters=500)
    state, record = ccd_solve(*args, max_iters=500)
    assert record.status in ("max_iters", "converged")
    assert relative_error(admm_state.u, oracle.u) <= 1e-10
    assert relative_error(state.u, admm_state.u) <= 1e-8
    assert relative_error(state.u, oracle.u) <= 1e-8


@pytest.mark.parametrize("solver", ["admm", "ccd", "lmccd", "rcg"])
def test_multiplier_identity(solver, tv_instance):
    snapshots = []
    callback = _collect(snapshots)
    args = _args(tv_instance)
    if solver == "admm":
        admm_exact(*args, max_iters=30, callback=callback)
    elif solver == "ccd":
        ccd_solve(*args, max_iters=30, callback=callback)
    elif solver == "lmccd":
        lmccd_solve(*args, memory_m=3, max_iters=30, callback=callback)
    else:
        rcg_solve(*args, n_cg=2, max_iters=30, callback=callback)

    b_op = tv_instance["b_op"]
    b_prev = np.zeros(b_op.n_out)
    for u, z, b in snapshots:
        defect = b - b_prev - z + b_op.apply(u)
        assert np.max(np.abs(defect)) <= 1e-12 * max(1.0, np.max(np.abs(b)))
        b_prev = b


def test_lmccd_large_memory_equals_ccd(tv_instance):
    full, limited = [], []
    ccd_solve(*_args(tv_instance), max_iters=500, callback=_collect(full))
    lmccd_solve(*_args(tv_instance), memory_m=500, max_iters=500, callback=_collect(limited))
    assert len(full) == len(limited)
    for (u_full, _, _), (u_lm, _, _) in zip(full, limited):
        assert np.max(np.abs(u_full - u_lm)) <= 1e-12 * max(1.0, np.max(np.abs(u_full)))


def test_lmccd_zero_memory_converges():
    gen = np.random.default_rng(3)
    n = 10
    a_op = dense_operator(np.eye(n) + 0.1 * gen.standard_normal((n, n)))
    u_true = np.repeat([1.0, -1.0], n // 2)
    d = a_op.apply(u_true) + 0.05 * gen.standard_normal(n)
    oracle_state, _ = admm_exact(a_op, diff1d(n), d, 1.0, 1.0, max_iters=50000, tol=1e-14)

    defects = []
    state, _ = lmccd_solve(a_op, diff1d(n), d, 1.0, 1.0, memory_m=0, max_iters=5000,
                                callback=lambda snap: defects.append(snap.store.conjugacy_defect()))
    assert relative_error(state.u, oracle_state.u) <= 1e-6
    assert max(defects) == 0.0


def test_lmccd_rejects_negative_memory(tv_instance):
    with pytest.raises(ValueError):
        lmccd_solve(*_args(tv_instance), memory_m=-1, max_iters=5)


def test_ccd_is_deterministic(tv_instance):
    _, first = ccd_solve(*_args(tv_instance), max_iters=50, u_true=tv_instance["u_true"])
    _, second = ccd_solve(*_args(tv_instance), max_iters=50, u_true=tv_instance["u_true"])
    assert first.to_frame().equals(second.to_frame())


# ================================
# RCG
# ================================

def test_rcg_with_full_inner_solve_matches_admm():
    gen = np.random.default_rng(11)
    n = 12
    a_op = dense_operator(gen.standard_normal((16, n)))
    d = gen.standard_normal(16)
    exact, approx = [], []
    admm_exact(a_op, diff1d(n), d, 1.0, 0.5, max_iters=30, callback=_collect(exact))
    rcg_solve(a_op, diff1d(n), d, 1.0, 0.5, n_cg=2 * n, max_iters=30, callback=_collect(approx))
    for (u_exact, _, _), (u_rcg, _, _) in zip(exact, approx):
        assert np.linalg.norm(u_rcg - u_exact) <= 1e-8 * np.linalg.norm(u_exact)


def test_rcg_inner_iterations_recorded(tv_instance):
    _, record = rcg_solve(*_args(tv_instance), n_cg=1, max_iters=10)
    assert record.inner_iterations == [1] * 10


def test_rcg_rejects_zero_inner(tv_instance):
    with pytest.raises(ValueError):
        rcg_solve(*_args(tv_instance), n_cg=0, max_iters=5)


# ================================
# 비용 / 예산
# ================================

def _run_for_cost(solver, p, **kwargs):
    a_op, b_op, d = p["a_op"], p["b_op"], p["d"]
    if solver == "ccd":
        return ccd_solve(a_op, b_op, d, 1.0, 1.0, **kwargs)[1]
    if solver == "lmccd":
        return lmccd_solve(a_op, b_op, d, 1.0, 1.0, 5, **kwargs)[1]
    if solver == "rcg":
        return rcg_solve(a_op, b_op, d, 1.0, 1.0, 3, **kwargs)[1]
    if solver == "ista":
        return ista_solve(a_op, d, 1.0, None, b_op=identity(a_op.n_in), **kwargs)[1]
    if solver == "fista":
        return fista_solve(a_op, d, 1.0, None, b_op=identity(a_op.n_in), **kwargs)[1]
    return scd_mm_solve(a_op, b_op, d, np.zeros(b_op.n_out), 1.0, **kwargs)[1]


EXPECTED_COST = {
    "ccd": lambda k: (k + 1, k + 1),
    "lmccd": lambda k: (k + 1, k + 1),
    "scd-mm": lambda k: (k + 1, k + 1),
    "rcg": lambda k: (4 * k, 3 * k),
    "ista": lambda k: (k, k),
    "fista": lambda k: (k, k),
}


@pytest.mark.parametrize("solver", sorted(EXPECTED_COST))
def test_operation_accounting(solver, tv_instance):
    record = _run_for_cost(solver, tv_instance, max_iters=20)
    assert len(record) == 20
    for k, row in enumerate(record.rows, start=1):
        assert (row["ops_A"], row["ops_At"]) == EXPECTED_COST[solver](k)


@pytest.mark.parametrize("solver,iterations,used", [
    ("ccd", 49, 100),
    ("lmccd", 49, 100),
    ("rcg", 14, 98),
    ("fista", 50, 100),
    ("ista", 50, 100),
])
def test_budget_stops_before_overrun(solver, iterations, used, tv_instance):
    record = _run_for_cost(solver, tv_instance, max_iters=1000, budget=100)
    assert record.status == "budget"
    assert len(record) == iterations
    last = record.last
    assert last["ops_A"] + last["ops_At"] == used <= 100


def test_budget_too_small_for_initialization(tv_instance):
    state, record = ccd_solve(*_args(tv_instance), max_iters=10, budget=1)
    assert record.status == "budget" and len(record) == 0
    np.testing.assert_array_equal(state.u, 0.0)


# ================================
# ISTA / FISTA
# ================================

def test_ista_identity_reaches_shrinkage():
    d = np.array([3.0, -0.5, 1.2, -4.0])
    u, record = ista_solve(identity(4), d, 1.0, 1.0, max_iters=50, tol=1e-12)
    np.testing.assert_allclose(u, [2.0, 0.0, 0.2, -3.0], atol=1e-12)
    assert record.status == "converged"


def test_ista_detects_divergence():
    a_op = dense_operator(np.diag([1.0, 2.0, 3.0]))
    _, record = ista_solve(a_op, np.ones(3), 1.0, 0.5, max_iters=100)
    assert record.status == "diverged"
    assert len(record) < 100


def test_ista_fista_reject_general_regularizer(tv_instance):
    p = tv_instance
    with pytest.raises(ValueError):
        ista_solve(p["a_op"], p["d"], 1.0, None, 5, b_op=p["b_op"])
    with pytest.raises(ValueError):
        fista_solve(p["a_op"], p["d"], 1.0, None, 5, b_op=p["b_op"])


def test_fista_momentum_sequence():
    zetas = []
    fista_solve(identity(3), np.full(3, 3.0), 1.0, None, max_iters=4,
                callback=lambda snap: zetas.append(snap.zeta))
    expected = [1.0]
    for _ in range(3):
        expected.append((1.0 + math.sqrt(1.0 + 4.0 * expected[-1] ** 2)) / 2.0)
    np.testing.assert_allclose(zetas, expected, rtol=1e-15)


def test_fista_tiny_l1_example():
    u, _ = fista_solve(identity(3), np.array([2.0, 0.1, -2.0]), 1.0, None, max_iters=500)
    np.testing.assert_allclose(u, [1.0, 0.0, -1.0], atol=1e-8)


def test_fista_beats_ista_on_ill_conditioned_problem():
    gen = np.random.default_rng(5)
    n = 50
    left, _ = np.linalg.qr(gen.standard_normal((n, n)))
    right, _ = np.linalg.qr(gen.standard_normal((n, n)))
    a_op = dense_operator(left @ np.diag(np.logspace(0, -3, n)) @ right.T)
    u_true = np.zeros(n)
    u_true[[4, 17, 31, 44]] = [1.0, -1.0, 0.5, 2.0]
    d = a_op.apply(u_true)
    _, ista_record = ista_solve(a_op, d, 100.0, None, max_iters=200)
    _, fista_record = fista_solve(a_op, d, 100.0, None, max_iters=200)
    assert fista_record.last["objective"] <= ista_record.last["objective"]


# ================================
# 조향 켤레 방향 + 승수법
# ================================

@pytest.fixture(scope="module")
def constrained_instance():
    gen = np.random.default_rng(17)
    a = gen.standard_normal((10, 6))
    b = gen.standard_normal((1, 6))
    d = gen.standard_normal(10)
    c = np.array([0.7])
    kkt = np.block([[2.0 * a.T @ a, b.T], [b, np.zeros((1, 1))]])
    solution = np.linalg.solve(kkt, np.concatenate([2.0 * a.T @ d, c]))
    return dense_operator(a), dense_operator(b), d, c, solution[:6]


def test_scd_mm_matches_kkt(constrained_instance):
    a_op, b_op, d, c, u_kkt = constrained_instance
    u, record = scd_mm_solve(a_op, b_op, d, c, 10.0, max_iters=1000)
    assert np.linalg.norm(u - u_kkt) <= 1e-6 * np.linalg.norm(u_kkt)
    assert record.last["primal_residual"] <= 1e-8


def test_scd_mm_multiplier_identity(constrained_instance):
    a_op, b_op, d, c, _ = constrained_instance
    snapshots = []
    scd_mm_solve(a_op, b_op, d, c, 10.0, max_iters=20, callback=_collect(snapshots))
    b_prev = np.zeros(1)
    for u, _, b in snapshots:
        np.testing.assert_allclose(b - b_prev, c - b_op.apply(u), atol=1e-12)
        b_prev = b


def test_scd_mm_large_memory_equals_unbounded(constrained_instance):
    a_op, b_op, d, c, _ = constrained_instance
    full, limited = [], []
    scd_mm_solve(a_op, b_op, d, c, 10.0, max_iters=50, callback=_collect(full))
    scd_mm_solve(a_op, b_op, d, c, 10.0, max_iters=50, memory_m=100, callback=_collect(limited))
    for (u_full, _, _), (u_lm, _, _) in zip(full, limited):
        assert np.max(np.abs(u_full - u_lm)) <= 1e-12 * max(1.0, np.max(np.abs(u_full)))
