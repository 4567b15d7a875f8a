"""
잡음, 참모델, 조건수, 문제 생성 테스트
"""

import math

import numpy as np
import pytest
import scipy.fft

from config import NoiseSpec, build_config
from harness import (blocky_truth, build_problem, estimate_condition,
                     make_noise, relative_error, spike_indices, spikes_truth)
from operators import (dense_operator, dilat1d_kernel, grad2d_aniso, identity,
                       stack)


# ================================
# 잡음
# ================================

def test_noise_without_mute_has_exact_std():
    clean = np.linspace(-2.0, 1.0, 400)
    noise = make_noise(400, NoiseSpec(sigma_rel=0.15, mute_fraction=0.0, seed=3), clean)
    assert noise.std() == pytest.approx(0.3, rel=1e-12)


def test_noise_is_seeded():
    clean = np.ones(128)
    first = make_noise(128, NoiseSpec(seed=9), clean)
    np.testing.assert_array_equal(first, make_noise(128, NoiseSpec(seed=9), clean))
    assert not np.array_equal(first, make_noise(128, NoiseSpec(seed=10), clean))


def test_noise_full_mute_is_zero():
    noise = make_noise(64, NoiseSpec(mute_fraction=1.0), np.ones(64))
    np.testing.assert_array_equal(noise, 0.0)


def test_noise_zero_clean_signal_rejected():
    with pytest.raises(ValueError):
        make_noise(16, NoiseSpec(), np.zeros(16))


def test_noise_low_frequencies_removed_1d():
    n = 256
    noise = make_noise(n, NoiseSpec(sigma_rel=0.15, mute_fraction=0.25, seed=1), np.ones(n))
    spectrum = np.abs(scipy.fft.fft(noise))
    ratio = np.abs(scipy.fft.fftfreq(n)) / 0.5
    assert np.max(spectrum[ratio < 0.25]) <= 1e-12 * np.max(spectrum)
    assert noise.std() == pytest.approx(0.15, rel=1e-12)


def test_noise_low_frequencies_removed_2d():
    shape = (32, 48)
    clean = np.ones(shape)
    noise = make_noise(shape, NoiseSpec(sigma_rel=0.1, mute_fraction=0.25, seed=4), clean)
    spectrum = np.abs(scipy.fft.fftn(noise))
    fy = np.abs(scipy.fft.fftfreq(shape[0]))[:, None] / 0.5
    fx = np.abs(scipy.fft.fftfreq(shape[1]))[None, :] / 0.5
    low = np.maximum(fy, fx) < 0.25
    assert np.max(spectrum[low]) <= 1e-12 * np.max(spectrum)
    assert noise.shape == shape


# ================================
# 참모델
# ================================

def test_spikes_truth_support():
    u = spikes_truth(500)
    support = np.flatnonzero(u)
    assert list(support) == spike_indices(500)
    assert len(support) == 5
    assert np.all(u[support] != 0.0)


def test_spikes_truth_scales_with_grid():
    for n in (100, 500):
        positions = np.array(spike_indices(n)) / n
        np.testing.assert_allclose(positions, [0.12, 0.30, 0.46, 0.64, 0.82], atol=1.0 / n)


def test_spike_amplitudes_outweigh_l1_shrinkage():
    """단일 스파이크의 L1 축소 편향 1/(α‖A e_i‖²) 가 진폭의 5% 미만 (스파이크 프리셋 커널, α=1e4)"""
    matrix = dilat1d_kernel(500, 500, 0.1, 2.0, 1e-2).to_dense()
    u = spikes_truth(500)
    idx = spike_indices(500)
    bias = 1.0 / (1e4 * np.sum(matrix[:, idx] ** 2, axis=0))
    assert np.all(bias < 0.05 * np.abs(u[idx]))


def test_spikes_truth_rejects_small_grid():
    with pytest.raises(ValueError):
        spikes_truth(15)


def test_blocky_truth_is_piecewise_constant():
    grid = blocky_truth(64)
    gradient = grad2d_aniso(64, 64).apply(grid.ravel())
    assert np.count_nonzero(gradient) <= 0.1 * gradient.size
    assert grid[0, 0] == grid[-1, -1] == 0.0
    assert len(np.unique(grid)) >= 3


def test_blocky_truth_rejects_small_grid():
    with pytest.raises(ValueError):
        blocky_truth(9)


# ================================
# 진단
# ================================

def test_relative_error_examples():
    assert relative_error(np.array([1.0, 1.0]), np.array([1.0, 1.0])) == 0.0
    assert relative_error(np.array([0.0, 0.0]), np.array([3.0, 4.0])) == 1.0
    with pytest.raises(ValueError):
        relative_error(np.ones(2), np.zeros(2))


def test_condition_identity_and_diagonal():
    assert estimate_condition(stack(identity(8), None, 1.0, 0.0)) == pytest.approx(1.0, rel=1e-10)
    diag = stack(dense_operator(np.diag([1.0, 10.0])), None, 1.0, 0.0)
    assert estimate_condition(diag) == pytest.approx(10.0, rel=1e-10)
    assert estimate_condition(diag, of="normal") == pytest.approx(100.0, rel=1e-10)


def test_condition_singular_is_infinite():
    f_op = stack(dense_operator(np.array([[1.0, 0.0], [0.0, 0.0]])), None, 1.0, 0.0)
    assert math.isinf(estimate_condition(f_op))


def test_condition_iterative_matches_dense():
    """32×32 잡음 제거 문제: 반복 추정 (N > 512) 과 밀집 고유값 비교"""
    f_op = stack(identity(1024), grad2d_aniso(32, 32), 10.0, 1e2)
    dense = f_op.to_dense()
    eigs = np.linalg.eigvalsh(dense.T @ dense)
    expected = math.sqrt(eigs[-1] / eigs[0])
    assert estimate_condition(f_op) == pytest.approx(expected, rel=0.05)


def test_condition_normal_denoise_and_monotone():
    kappas = []
    for lam in (1.0, 1e2, 1e3, 1e4):
        kappas.append(estimate_condition(stack(identity(1024), grad2d_aniso(32, 32), 10.0, lam),
                                         of="normal"))
    assert kappas[0] == pytest.approx(1.8, rel=0.15)
    assert all(a < b for a, b in zip(kappas, kappas[1:]))


# ================================
# 문제 생성
# ================================

def test_build_problem_denoise_is_deterministic():
    config = build_config({"preset": "denoise", "solver": "ccd", "grid": {"nx": 24, "ny": 20}})
    first, second = build_problem(config), build_problem(config)
    assert first.d.tobytes() == second.d.tobytes()
    assert first.model_shape == (20, 24)
    assert first.b_op.n_out == 2 * 480 - 24 - 20


def test_build_problem_spikes():
    config = build_config({"preset": "spikes", "solver": "fista", "grid": {"n_model": 64, "n_data": 48}})
    problem = build_problem(config)
    assert problem.a_op.shape == (48, 64)
    assert problem.d.shape == (48,)
    np.testing.assert_allclose(problem.clean, problem.a_op.apply(problem.u_true))


def test_build_problem_scd_mm_constraint_from_truth():
    config = build_config({"preset": "denoise", "solver": "scd-mm", "grid": {"nx": 12, "ny": 12}})
    problem = build_problem(config)
    np.testing.assert_allclose(problem.c_vec, problem.b_op.apply(problem.u_true))
