"""
내부 최소제곱 솔버
- CGNE: 정규방정식 FᵀF x = Fᵀ v 에 대한 켤레 기울기 (행렬 없음)
- 직접 해법: FᵀF 의 밀집 촐레스키 분해 (정확한 ADMM 내부 단계 및 검증용 오라클)
"""

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from logger_config import get_logger
from operators import LinearOperatorSpec, StackedOperator, _as_vector

logger = get_logger("Krylov")

# 기울기 제곱 노름이 초기값의 이 비율 아래로 떨어지면 수렴으로 간주
CGNE_BREAKDOWN_RTOL = 1e-28


class RankDeficiencyError(np.linalg.LinAlgError):
    """FᵀF 가 특이하거나 양의 정부호가 아님 (F 가 최대 열 계수가 아님)"""


@dataclass
class CgneState:
    """CGNE 반복 상태"""
    x: np.ndarray           # 현재 해
    r: np.ndarray           # 데이터 공간 잔차 v − F x
    p: np.ndarray           # 탐색 방향
    iteration: int = 0
    gamma: float = 0.0      # ‖Fᵀ r‖² (방향 갱신 직전 값)
    converged: bool = False


def cgne_iterator(f_op: LinearOperatorSpec, v: np.ndarray,
                  x0: np.ndarray) -> Iterator[CgneState]:
    """
    CGNE 반복자, 완료된 반복마다 상태를 내보낸다
    시작 잔차 1회 F 적용, 이후 반복마다 Fᵀ 1회 + F 1회
    """
    v = _as_vector(v, f_op.n_out, "cgne(v)")
    x = _as_vector(x0, f_op.n_in, "cgne(x0)").copy()
    state = CgneState(x=x, r=v - f_op.apply(x), p=np.zeros_like(x))

    gamma0 = 0.0
    gamma_prev = 0.0
    while True:
        s = f_op.apply_adjoint(state.r)
        gamma = float(s @ s)
        if state.iteration == 0:
            gamma0 = gamma
        if gamma == 0.0 or gamma <= CGNE_BREAKDOWN_RTOL * gamma0:
            state.converged = True
            return

        if state.iteration == 0:
            state.p = s
        else:
            state.p = s + (gamma / gamma_prev) * state.p
        q = f_op.apply(state.p)
        qq = float(q @ q)
        if qq == 0.0:
            state.converged = True
            return

        step = gamma / qq
        state.x += step * state.p
        state.r -= step * q
        state.gamma = gamma
        state.iteration += 1
        gamma_prev = gamma
        yield state


def cgne_solve(f_op: LinearOperatorSpec, v: np.ndarray, x0: np.ndarray,
               n_iters: int) -> np.ndarray:
    """x0 에서 시작해 n_iters 번의 CGNE 반복 (조기 수렴 시 현재 해 반환)"""
    if n_iters < 1:
        raise ValueError(f"n_iters 는 1 이상이어야 합니다: {n_iters}")
    x = np.array(x0, dtype=np.float64)
    for state in cgne_iterator(f_op, v, x0):
        x = state.x
        if state.iteration >= n_iters:
            break
    return x.copy()


def power_iteration(f_op: LinearOperatorSpec, n_iters: int = 100,
                    seed: int = 0) -> float:
    """FᵀF 의 최대 고유값 σ_max² 추정"""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(f_op.n_in)
    x /= np.linalg.norm(x)
    eig = 0.0
    for _ in range(n_iters):
        y = f_op.apply_adjoint(f_op.apply(x))
        eig = float(x @ y)
        norm = float(np.linalg.norm(y))
        if norm == 0.0:
            return 0.0
        x = y / norm
    return eig


# ================================
# 직접 해법
# ================================

class DirectLeastSquares:
    """FᵀF 를 한 번 구체화/분해해 두고 여러 우변에 재사용"""

    # (최소/최대 피벗)² 가 이 값 이하이면 계수 부족 (피벗² 가 FᵀF 고유값 규모)
    PIVOT_RTOL = 1e-14

    def __init__(self, f_op: LinearOperatorSpec):
        self.f_op = f_op
        dense_f = f_op.to_dense()
        normal = dense_f.T @ dense_f
        try:
            self.factor = cho_factor(normal, lower=False, check_finite=True)
        except LinAlgError as e:
            logger.error(f"❌ FᵀF 분해 실패: {e}")
            raise RankDeficiencyError(f"FᵀF 가 양의 정부호가 아닙니다: {e}") from e

        pivots = np.abs(np.diag(self.factor[0]))
        if pivots.min() ** 2 <= self.PIVOT_RTOL * pivots.max() ** 2:
            raise RankDeficiencyError(
                f"FᵀF 가 수치적으로 특이합니다 (최소/최대 피벗 {pivots.min():.3e}/{pivots.max():.3e})"
            )

    def solve(self, v: np.ndarray) -> np.ndarray:
        return cho_solve(self.factor, self.f_op.apply_adjoint(v))


def direct_ls_solve(f_op: StackedOperator, v: np.ndarray,
                    solver: Optional[DirectLeastSquares] = None) -> np.ndarray:
    """FᵀF u = Fᵀ v 를 밀집 대칭 분해로 푼다"""
    if f_op.n_in > 4096:
        raise ValueError(f"직접 해법은 N ≤ 4096 에서만 지원합니다: N={f_op.n_in}")
    return (solver or DirectLeastSquares(f_op)).solve(v)
