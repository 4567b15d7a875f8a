"""
합성 실험 구성 및 진단
- 참모델 (스파이크, 블록), 저파수 제거 잡음
- 조건수 추정, 상대 오차
- 설정으로부터 문제 인스턴스 생성
"""

import math
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np
import scipy.fft
from scipy.sparse.linalg import LinearOperator, cg

from artifacts import read_f64
from config import ExperimentConfig, NoiseSpec
from krylov import power_iteration
from logger_config import get_logger
from operators import (DimensionError, LinearOperatorSpec, dense_operator,
                       diff1d, dilat1d_kernel, grad2d_aniso, identity,
                       reservoir2d_kernel)

logger = get_logger("Harness")

# 스파이크 참모델: 상대 위치와 진폭
# dilat1d 커널 (c=1e-2, D=0.1) 과 α=1e4 에서 데이터 항이 L1 항보다 크도록 10 단위 진폭
SPIKE_POSITIONS = (0.12, 0.30, 0.46, 0.64, 0.82)
SPIKE_AMPLITUDES = (15.0, -10.0, 20.0, 12.0, -18.0)

# 블록 참모델: (행 시작, 행 끝, 열 시작, 열 끝) 상대 좌표와 값
BLOCKS = (
    ((0.20, 0.45, 0.15, 0.45), 1.0),
    ((0.55, 0.80, 0.50, 0.85), -0.6),
    ((0.25, 0.50, 0.60, 0.80), 0.5),
)

# 밀집 고유값 계산으로 대신하는 최대 N
DENSE_CONDITION_LIMIT = 512


# ================================
# 잡음
# ================================

def _mute_mask(shape: Sequence[int], mute_fraction: float) -> np.ndarray:
    """|k|/Nyquist < mute_fraction 인 파수를 False 로 (2D 는 축별 최대값 기준)"""
    ratio = np.zeros(tuple(shape))
    for axis, n in enumerate(shape):
        frac = np.abs(scipy.fft.fftfreq(n)) / 0.5
        expand = [1] * len(shape)
        expand[axis] = n
        ratio = np.maximum(ratio, frac.reshape(expand))
    return ratio >= mute_fraction


def make_noise(shape: Sequence[int] | int, spec: NoiseSpec, clean: np.ndarray) -> np.ndarray:
    """
    가우시안 잡음을 저파수 제거 후 std = sigma_rel · max|clean| 로 재스케일
    mute_fraction ≥ 1 이면 0 벡터
    """
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    clean = np.asarray(clean, dtype=np.float64)
    if clean.size != int(np.prod(shape)):
        raise DimensionError(f"make_noise: 격자 {shape} 와 신호 길이 {clean.size} 가 다릅니다")
    amplitude = float(np.max(np.abs(clean))) if clean.size else 0.0
    if amplitude == 0.0:
        raise ValueError("make_noise: 깨끗한 신호가 모두 0 이라 진폭 기준이 없습니다")

    if spec.mute_fraction >= 1.0 or spec.sigma_rel == 0.0:
        return np.zeros_like(clean)

    rng = np.random.default_rng(spec.seed)
    noise = rng.standard_normal(shape)
    if spec.mute_fraction > 0.0:
        spectrum = scipy.fft.fftn(noise)
        spectrum[~_mute_mask(shape, spec.mute_fraction)] = 0.0
        noise = scipy.fft.ifftn(spectrum).real

    std = float(noise.std())
    if std == 0.0:
        return np.zeros_like(clean)
    noise *= spec.sigma_rel * amplitude / std
    return noise.reshape(clean.shape)


# ================================
# 참모델
# ================================

def spikes_truth(n: int, n_spikes: int = 5) -> np.ndarray:
    """고정 상대 위치의 부호/크기가 섞인 스파이크"""
    if n < 16:
        raise ValueError(f"spikes_truth: n 은 16 이상이어야 합니다: {n}")
    if not 1 <= n_spikes <= len(SPIKE_POSITIONS):
        raise ValueError(f"n_spikes 는 1..{len(SPIKE_POSITIONS)} 범위여야 합니다: {n_spikes}")
    u = np.zeros(n)
    for pos, amp in zip(SPIKE_POSITIONS[:n_spikes], SPIKE_AMPLITUDES[:n_spikes]):
        u[int(round(pos * n))] = amp
    return u


def spike_indices(n: int, n_spikes: int = 5) -> list[int]:
    return [int(round(pos * n)) for pos in SPIKE_POSITIONS[:n_spikes]]


def blocky_truth(n_side: int, nx: Optional[int] = None) -> np.ndarray:
    """0 배경 위 직사각형 고원 몇 개 (n_side 행 × nx 열)"""
    if n_side < 10 or (nx is not None and nx < 10):
        raise ValueError(f"blocky_truth: 격자 크기는 10 이상이어야 합니다: {n_side}, {nx}")
    ny, nx = n_side, nx or n_side
    grid = np.zeros((ny, nx))
    for (r0, r1, c0, c1), value in BLOCKS:
        grid[int(round(r0 * ny)):int(round(r1 * ny)), int(round(c0 * nx)):int(round(c1 * nx))] = value
    return grid


# ================================
# 진단
# ================================

def relative_error(u: np.ndarray, u_true: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    u_true = np.asarray(u_true, dtype=np.float64)
    if u.shape != u_true.shape:
        raise DimensionError(f"relative_error: 길이 {u_true.shape} 기대, 실제 {u.shape}")
    ref = float(np.linalg.norm(u_true))
    if ref == 0.0:
        raise ValueError("relative_error: 참모델이 0 입니다")
    return float(np.linalg.norm(u - u_true)) / ref


def _normal_operator(f_op: LinearOperatorSpec) -> LinearOperator:
    n = f_op.n_in
    return LinearOperator(
        shape=(n, n),
        matvec=lambda x: f_op.apply_adjoint(f_op.apply(np.ravel(x))),
        dtype=np.float64,
    )


def _extreme_eigenvalues(f_op: LinearOperatorSpec, n_power_iters: int) -> tuple[float, float]:
    """FᵀF 의 (최대, 최소) 고유값"""
    if f_op.n_in <= DENSE_CONDITION_LIMIT:
        dense = f_op.to_dense()
        eigs = np.linalg.eigvalsh(dense.T @ dense)
        return float(eigs[-1]), float(eigs[0])

    lam_max = power_iteration(f_op, n_power_iters)
    normal = _normal_operator(f_op)
    rng = np.random.default_rng(1)
    x = rng.standard_normal(f_op.n_in)
    x /= np.linalg.norm(x)
    lam_min = lam_max
    for _ in range(n_power_iters):
        y, info = cg(normal, x, rtol=1e-10, maxiter=10 * f_op.n_in)
        if info != 0:
            logger.warning(f"⚠️ 역 거듭제곱 CG 미수렴 (info={info})")
        norm = float(np.linalg.norm(y))
        if not math.isfinite(norm) or norm == 0.0:
            return lam_max, 0.0
        lam_min = 1.0 / norm
        x = y / norm
    return lam_max, lam_min


def estimate_condition(f_op: LinearOperatorSpec, n_power_iters: int = 100,
                       of: Literal["operator", "normal"] = "operator") -> float:
    """
    조건수 추정
    of="operator": κ(F) = √(λ_max/λ_min) of FᵀF
    of="normal":   κ(FᵀF) = λ_max/λ_min (정규방정식 행렬)
    특이하면 +inf
    """
    if n_power_iters < 10:
        raise ValueError(f"n_power_iters 는 10 이상이어야 합니다: {n_power_iters}")
    lam_max, lam_min = _extreme_eigenvalues(f_op, n_power_iters)
    if lam_max <= 0.0 or lam_min <= 1e-14 * lam_max:
        return math.inf
    ratio = lam_max / lam_min
    return ratio if of == "normal" else math.sqrt(ratio)


# ================================
# 문제 인스턴스
# ================================

@dataclass
class Problem:
    """설정으로 만든 역문제 인스턴스"""
    name: str
    a_op: LinearOperatorSpec
    b_op: LinearOperatorSpec
    d: np.ndarray
    clean: np.ndarray
    u_true: Optional[np.ndarray]
    c_vec: Optional[np.ndarray]
    model_shape: tuple[int, ...]
    data_shape: tuple[int, ...]


def _regularizer(name: str, n: int, nx: Optional[int], ny: Optional[int]) -> LinearOperatorSpec:
    if name == "identity":
        return identity(n)
    if name == "diff1d":
        return diff1d(n)
    if nx is None or ny is None or nx * ny != n:
        raise ValueError(f"grad2d 정규화에는 nx·ny = N 인 격자가 필요합니다: nx={nx}, ny={ny}, N={n}")
    return grad2d_aniso(nx, ny)


def build_problem(config: ExperimentConfig) -> Problem:
    """설정 → (A, B, d, 참모델). 같은 설정 (시드 포함) 이면 비트 단위로 동일"""
    grid, noise = config.grid, config.noise
    if config.problem == "denoise2d":
        nx, ny = grid.nx or 64, grid.ny or 64
        truth = blocky_truth(ny, nx)
        u_true = truth.ravel()
        a_op = identity(nx * ny)
        b_op = grad2d_aniso(nx, ny)
        clean = u_true.copy()
        d = clean + make_noise((ny, nx), noise, clean)
        model_shape = data_shape = (ny, nx)
    elif config.problem == "spikes1d":
        n_model = grid.n_model or 500
        n_data = grid.n_data or n_model
        kernel = config.kernel
        u_true = spikes_truth(n_model)
        a_op = dilat1d_kernel(n_model, n_data, kernel.depth_D, kernel.length_A, kernel.scale_c)
        b_op = identity(n_model)
        clean = a_op.apply(u_true)
        d = clean + make_noise((n_data,), noise, clean)
        model_shape, data_shape = (n_model,), (n_data,)
    elif config.problem == "pressure2d":
        n_side = grid.n_side or 50
        kernel = config.kernel
        u_true = blocky_truth(n_side).ravel()
        a_op = reservoir2d_kernel(n_side, kernel.depth_D, kernel.length_A, kernel.scale_c)
        b_op = grad2d_aniso(n_side, n_side)
        clean = a_op.apply(u_true)
        d = clean + make_noise((n_side, n_side), noise, clean)
        model_shape = data_shape = (n_side, n_side)
    else:
        custom = config.custom
        matrix = read_f64(custom.a_matrix)
        a_op = dense_operator(matrix)
        d = read_f64(custom.data).ravel()
        if d.size != a_op.n_out:
            raise DimensionError(f"custom: 데이터 길이 {d.size} 가 A 의 행 수 {a_op.n_out} 와 다릅니다")
        b_op = _regularizer(custom.regularizer, a_op.n_in, custom.nx, custom.ny)
        u_true = read_f64(custom.truth).ravel() if custom.truth else None
        clean = d.copy()
        if custom.nx and custom.ny:
            model_shape = (custom.ny, custom.nx)
        else:
            model_shape = (a_op.n_in,)
        data_shape = (a_op.n_out,)

    # scd-mm 제약 B u = c: 명시적 c 가 없으면 참모델에서 만든다
    c_vec = None
    if config.problem == "custom" and config.custom.constraint is not None:
        c_vec = read_f64(config.custom.constraint).ravel()
    elif u_true is not None:
        c_vec = b_op.apply(u_true)
    if config.solver == "scd-mm" and c_vec is None:
        raise ValueError("scd-mm 에는 제약 벡터 c 또는 참모델이 필요합니다")

    logger.info(f"🧪 문제 생성: {config.problem} | N={a_op.n_in} | M={a_op.n_out} | K={b_op.n_out}")
    return Problem(config.problem, a_op, b_op, d, clean, u_true, c_vec, model_shape, data_shape)
