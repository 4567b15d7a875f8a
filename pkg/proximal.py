"""
축소(soft thresholding) 연산자와 복합 목적함수
"""

from dataclasses import dataclass

import numpy as np

from operators import LinearOperatorSpec, _as_vector


def shrink(y: np.ndarray, gamma: float) -> np.ndarray:
    """sign(y)·max(|y|−γ, 0), |y| = γ 에서는 0"""
    if not gamma > 0:
        raise ValueError(f"gamma 는 양수여야 합니다: {gamma}")
    y = np.asarray(y, dtype=np.float64)
    return np.sign(y) * np.maximum(np.abs(y) - gamma, 0.0)


@dataclass(frozen=True)
class Objective:
    """‖B u‖₁ + (α/2)‖A u − d‖₂²"""
    a_op: LinearOperatorSpec
    b_op: LinearOperatorSpec
    d: np.ndarray
    alpha: float

    def __post_init__(self) -> None:
        if self.b_op.n_in != self.a_op.n_in:
            raise ValueError("Objective: A 와 B 의 정의역 차원이 다릅니다")
        _as_vector(self.d, self.a_op.n_out, "Objective.d")
        if not self.alpha > 0:
            raise ValueError(f"alpha 는 양수여야 합니다: {self.alpha}")

    def value(self, u: np.ndarray) -> float:
        return objective_value(self, u)


def objective_value(obj: Objective, u: np.ndarray) -> float:
    residual = obj.a_op.apply(u) - obj.d
    return float(np.sum(np.abs(obj.b_op.apply(u))) + 0.5 * obj.alpha * residual @ residual)
