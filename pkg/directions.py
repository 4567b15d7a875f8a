"""
켤레 방향 저장소와 조향(steered) 켤레 방향 엔진
- DirectionStore: {p_i}, {q_i = F p_i}, δ_i = q_iᵀq_i (무제한 또는 m+1 칸 원형 버퍼)
- SteeredConjugateDirections: 매 외부 반복마다 변하는 우변 v_k 에 대해 F u ≈ v_k 를 갱신
"""

from typing import Callable, Optional

import numpy as np

from operators import LinearOperatorSpec, _as_vector

# δ ≤ DEGENERATE_RTOL · (지금까지의 최대 δ) 이면 퇴화 방향
DEGENERATE_RTOL = 1e-24
# 켤레화 후 δ ≤ ORTHOGONAL_LOSS_RTOL · ‖s‖² (켤레화 전) 이면 반올림 잡음만 남은 방향
ORTHOGONAL_LOSS_RTOL = 1e-20
# 켤레화 후에도 저장된 방향과의 코사인이 이 값을 넘으면 퇴화로 처리
CONJUGACY_TOL = 1e-8


class DirectionStore:
    """
    켤레 방향 집합
    capacity=None 이면 모든 방향을 보관, 정수면 원형 버퍼 (제한 메모리)
    버퍼에서 밀려나는 방향의 기여 τ_j p_j, τ_j q_j 는 ũ, ṽ 에 누적된다
    """

    def __init__(self, n_model: int, n_data: int, capacity: Optional[int] = None):
        if capacity is not None and capacity < 1:
            raise ValueError(f"capacity 는 1 이상이어야 합니다: {capacity}")
        self.n_model = n_model
        self.n_data = n_data
        self.capacity = capacity
        size = capacity if capacity is not None else 16
        self._p = np.zeros((size, n_model))
        self._q = np.zeros((size, n_data))
        self._delta = np.ones(size)
        self.count = 0
        self.head = 0               # 가장 최근에 갱신된 칸 j
        self.cycle = False
        self.delta_max = 0.0
        self.n_degenerate = 0
        self.n_lost = 0             # 켤레화 후 코사인 검사에서 버린 방향
        self.u_tilde = np.zeros(n_model)
        self.v_tilde = np.zeros(n_data)

    @property
    def p(self) -> np.ndarray:
        return self._p[:self.count]

    @property
    def q(self) -> np.ndarray:
        return self._q[:self.count]

    @property
    def delta(self) -> np.ndarray:
        return self._delta[:self.count]

    def _grow(self) -> None:
        size = 2 * self._p.shape[0]
        self._p = np.vstack([self._p, np.zeros_like(self._p)])
        self._q = np.vstack([self._q, np.zeros_like(self._q)])
        self._delta = np.concatenate([self._delta, np.ones(size - self._delta.shape[0])])

    def coefficients(self, v: np.ndarray) -> np.ndarray:
        """τ_i = q_iᵀ(v − ṽ) / δ_i"""
        return (self.q @ (v - self.v_tilde)) / self.delta

    def expand(self, tau: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(u, F u) = (ũ + Σ τ_i p_i, ṽ + Σ τ_i q_i)"""
        return self.u_tilde + tau @ self.p, self.v_tilde + tau @ self.q

    def orthogonalize(self, w: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """
        β_i = −q_iᵀs/δ_i 로 (w, s = F w) 를 저장된 방향들에 켤레화
        고전 그람-슈미트 2회 (한 번으로는 방향이 쌓일수록 켤레성이 무너진다)
        """
        for _ in range(2):
            beta = -(self.q @ s) / self.delta
            w = w + beta @ self.p
            s = s + beta @ self.q
        return w, s

    def max_cosine(self, q: np.ndarray) -> float:
        """max |q_iᵀq| / (‖q_i‖‖q‖), 저장된 비영 방향 대상"""
        q_norm = float(np.linalg.norm(q))
        norms = np.linalg.norm(self.q, axis=1)
        live = norms > 0
        if q_norm == 0.0 or not live.any():
            return 0.0
        return float(np.max(np.abs(self.q[live] @ q) / norms[live]) / q_norm)

    def push(self, p: np.ndarray, q: np.ndarray,
             tau: Optional[np.ndarray] = None,
             reference: Optional[float] = None) -> bool:
        """
        새 방향 저장, 퇴화 여부 반환
        tau 는 현재 반복의 계수 (원형 버퍼에서 밀려나는 방향의 동결에 사용)
        reference 는 켤레화 전 ‖s‖²
        """
        delta = float(q @ q)
        self.delta_max = max(self.delta_max, delta)
        degenerate = delta <= DEGENERATE_RTOL * self.delta_max
        if reference is not None and delta <= ORTHOGONAL_LOSS_RTOL * reference:
            degenerate = True
        if degenerate:
            self.n_degenerate += 1
            delta = 1.0
            p = np.zeros(self.n_model)
            q = np.zeros(self.n_data)

        if self.count == 0:
            slot = 0
        else:
            slot = self.head + 1
            if self.capacity is not None and slot == self.capacity:
                slot = 0
                self.cycle = True
            if self.cycle:
                if tau is None:
                    raise ValueError("원형 버퍼 교체에는 현재 계수 tau 가 필요합니다")
                self.u_tilde = self.u_tilde + tau[slot] * self._p[slot]
                self.v_tilde = self.v_tilde + tau[slot] * self._q[slot]
            elif slot == self._p.shape[0]:
                self._grow()

        self._p[slot] = p
        self._q[slot] = q
        self._delta[slot] = delta
        self.head = slot
        if not self.cycle:
            self.count += 1
        return degenerate

    # ================================
    # 진단
    # ================================

    def conjugacy_defect(self) -> float:
        """저장된 비영 방향들 사이의 max |q_iᵀq_j| / (‖q_i‖‖q_j‖), i ≠ j"""
        norms = np.linalg.norm(self.q, axis=1)
        live = norms > 0
        if live.sum() < 2:
            return 0.0
        qn = self.q[live] / norms[live, None]
        gram = np.abs(qn @ qn.T)
        np.fill_diagonal(gram, 0.0)
        return float(gram.max())

    def residual_projection(self, r: np.ndarray, exclude_head: bool = False) -> float:
        """
        max |q_iᵀ r| / (‖q_i‖‖r‖)
        exclude_head: 방금 추가된 방향 제외 (u 전개에 쓰인 방향만 검사)
        """
        r_norm = float(np.linalg.norm(r))
        norms = np.linalg.norm(self.q, axis=1)
        live = norms > 0
        if exclude_head:
            live[self.head] = False
        if r_norm == 0.0 or not live.any():
            return 0.0
        return float(np.max(np.abs(self.q[live] @ r) / norms[live]) / r_norm)


class SteeredConjugateDirections:
    """
    가변 우변 최소제곱 ‖F u − v_k‖ 의 조향 켤레 방향 반복
    외부 반복 1회당 Fᵀ 1회 + F 1회 (초기화도 동일 비용)
    """

    def __init__(self, f_op: LinearOperatorSpec, v0: np.ndarray,
                 capacity: Optional[int] = None):
        self.f_op = f_op
        self.v = _as_vector(v0, f_op.n_out, "scd(v0)").copy()
        self.store = DirectionStore(f_op.n_in, f_op.n_out, capacity)
        self.r = self.v.copy()
        self.v_used = self.v
        self.iteration = 0

        p0 = f_op.apply_adjoint(self.v)
        q0 = f_op.apply(p0)
        self.store.push(p0, q0)

    def step(self, next_rhs: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """
        u_{k+1} 을 v_k 에서 전개, next_rhs(u_{k+1}) 로 v_{k+1} 을 얻고 새 방향 추가
        반환값은 u_{k+1}, 이전 우변은 self.v_used 에 남는다
        """
        store = self.store
        tau = store.coefficients(self.v)
        u, predicted = store.expand(tau)

        v_next = _as_vector(next_rhs(u), self.f_op.n_out, "scd(v_next)")
        self.r = v_next - predicted
        w = self.f_op.apply_adjoint(self.r)
        s = self.f_op.apply(w)
        p, q = store.orthogonalize(w, s)
        if store.max_cosine(q) > CONJUGACY_TOL:
            store.n_lost += 1
            p, q = np.zeros_like(p), np.zeros_like(q)
        store.push(p, q, tau, reference=float(s @ s))

        self.v_used = self.v
        self.v = v_next
        self.iteration += 1
        return u
