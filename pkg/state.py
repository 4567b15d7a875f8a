"""
솔버 상태 및 수렴 기록 관리
"""

import math
from dataclasses import dataclass, field
from typing import Annotated, Dict, List, Literal, Optional

import numpy as np
import pandas as pd
from typing_extensions import TypedDict

# convergence.csv 열 순서 (메이저 버전 내에서 고정)
RECORD_COLUMNS = [
    "iter", "ops_A", "ops_At", "objective", "primal_residual", "rel_change", "rel_error",
]

StopStatus = Literal["running", "converged", "max_iters", "budget", "diverged"]


class ConvergenceRow(TypedDict):
    """반복 1회의 진단값"""
    iter: Annotated[int, "외부 반복 번호 (1부터)"]
    ops_A: Annotated[int, "누적 A 적용 횟수"]
    ops_At: Annotated[int, "누적 Aᵀ 적용 횟수"]
    objective: Annotated[float, "목적함수 p_k"]
    primal_residual: Annotated[float, "‖z_k − B u_k‖₂ (정의되지 않으면 NaN)"]
    rel_change: Annotated[float, "‖u_k − u_{k−1}‖₂ / ‖u_{k−1}‖₂"]
    rel_error: Annotated[float, "‖u_k − u_true‖₂ / ‖u_true‖₂ (참모델 없으면 NaN)"]


@dataclass
class SolverState:
    """ADMM 삼중항 (u_k, z_k, b_k), 비척도 승수는 μ = λ·b"""
    u: np.ndarray
    z: np.ndarray
    b: np.ndarray
    iteration: int = 0

    @classmethod
    def zeros(cls, n: int, k: int) -> "SolverState":
        return cls(u=np.zeros(n), z=np.zeros(k), b=np.zeros(k))


@dataclass
class FistaState:
    """FISTA 반복 상태, ζ_1 = 1"""
    u: np.ndarray
    y_prev: np.ndarray
    gamma: float
    zeta: float = 1.0

    def next_zeta(self) -> float:
        return (1.0 + math.sqrt(1.0 + 4.0 * self.zeta ** 2)) / 2.0


@dataclass
class IterationSnapshot:
    """반복 콜백에 전달되는 읽기 전용 스냅샷"""
    iteration: int
    u: np.ndarray
    z: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    rhs: Optional[np.ndarray] = None    # u 를 만든 우변 v_k
    store: Optional[object] = None      # DirectionStore (켤레 방향 계열)
    zeta: Optional[float] = None        # FISTA ζ_k


@dataclass
class ConvergenceRecord:
    """반복별 진단 기록"""
    solver: str
    rows: List[ConvergenceRow] = field(default_factory=list)
    status: StopStatus = "running"
    inner_iterations: List[int] = field(default_factory=list)

    def append(self, iteration: int, ops_a: int, ops_at: int, objective: float,
               primal_residual: float, rel_change: float,
               rel_error: float = math.nan) -> None:
        self.rows.append(ConvergenceRow(
            iter=iteration,
            ops_A=ops_a,
            ops_At=ops_at,
            objective=float(objective),
            primal_residual=float(primal_residual),
            rel_change=float(rel_change),
            rel_error=float(rel_error),
        ))

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def last(self) -> Optional[ConvergenceRow]:
        return self.rows[-1] if self.rows else None

    def final_metrics(self) -> Dict[str, float]:
        last = self.last
        if last is None:
            return {"iterations": 0, "ops_A": 0, "ops_At": 0}
        return {
            "iterations": last["iter"],
            "ops_A": last["ops_A"],
            "ops_At": last["ops_At"],
            "objective": last["objective"],
            "rel_error": last["rel_error"],
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=RECORD_COLUMNS)
