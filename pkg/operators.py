"""
행렬 없는(matrix-free) 선형 연산자 모듈
데이터 연산자 A, 정규화 연산자 B, 적층 연산자 F = [√α A; √λ B] 와 적용 횟수 카운터
"""

import threading
from abc import ABC, abstractmethod
from contextlib import contextmanager
from typing import Iterator, Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator
from scipy.spatial.distance import cdist

from logger_config import get_logger

logger = get_logger("Operators")


class DimensionError(ValueError):
    """벡터 길이가 연산자 차원과 맞지 않을 때"""


class BudgetExceededError(RuntimeError):
    """예산이 걸린 OpCounter 가 상한을 넘는 적용을 요청받았을 때"""


def _as_vector(x: np.ndarray, expected: int, role: str) -> np.ndarray:
    """1차원 float64 벡터로 변환하고 길이 검증"""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != expected:
        actual = v.shape[0] if v.ndim == 1 else v.shape
        raise DimensionError(f"{role}: 길이 {expected} 기대, 실제 {actual}")
    return v


# ================================
# 추상 연산자
# ================================

class LinearOperatorSpec(ABC):
    """정방향/수반 적용과 차원을 가진 선형 사상"""

    def __init__(self, n_in: int, n_out: int):
        self._n_in = int(n_in)
        self._n_out = int(n_out)

    @property
    def n_in(self) -> int:
        return self._n_in

    @property
    def n_out(self) -> int:
        return self._n_out

    @property
    def shape(self) -> tuple[int, int]:
        return (self._n_out, self._n_in)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = _as_vector(x, self._n_in, f"{type(self).__name__}.apply")
        return self._matvec(x)

    def apply_adjoint(self, y: np.ndarray) -> np.ndarray:
        y = _as_vector(y, self._n_out, f"{type(self).__name__}.apply_adjoint")
        return self._rmatvec(y)

    @abstractmethod
    def _matvec(self, x: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def _rmatvec(self, y: np.ndarray) -> np.ndarray:
        pass

    def to_dense(self) -> np.ndarray:
        """단위 벡터를 적용해 밀집 행렬로 구체화"""
        out = np.empty((self._n_out, self._n_in))
        e = np.zeros(self._n_in)
        for j in range(self._n_in):
            e[j] = 1.0
            out[:, j] = self.apply(e)
            e[j] = 0.0
        return out

    def to_scipy(self) -> LinearOperator:
        """scipy.sparse.linalg 솔버용 래퍼"""
        return LinearOperator(
            shape=self.shape,
            matvec=self.apply,
            rmatvec=self.apply_adjoint,
            dtype=np.float64,
        )

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self._n_out}x{self._n_in})"


# ================================
# 구체 연산자
# ================================

class DenseOperator(LinearOperatorSpec):
    """밀집 행렬 기반 연산자"""

    def __init__(self, matrix: np.ndarray):
        mat = np.array(matrix, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[0] < 1 or mat.shape[1] < 1:
            raise DimensionError(f"행렬은 M×N (M, N ≥ 1) 이어야 합니다: {mat.shape}")
        if not np.all(np.isfinite(mat)):
            raise ValueError("행렬에 유한하지 않은 값이 있습니다")
        super().__init__(mat.shape[1], mat.shape[0])
        self.matrix = mat
        self.matrix.setflags(write=False)

    def _matvec(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def _rmatvec(self, y: np.ndarray) -> np.ndarray:
        return self.matrix.T @ y

    def to_dense(self) -> np.ndarray:
        return self.matrix.copy()


class IdentityOperator(LinearOperatorSpec):
    """항등 연산자"""

    def __init__(self, n: int):
        if n < 1:
            raise ValueError(f"n 은 1 이상이어야 합니다: {n}")
        super().__init__(n, n)

    def _matvec(self, x: np.ndarray) -> np.ndarray:
        return x.copy()

    def _rmatvec(self, y: np.ndarray) -> np.ndarray:
        return y.copy()


class Diff1D(LinearOperatorSpec):
    """1차 전진 차분 (Bu)_i = u_{i+1} − u_i"""

    def __init__(self, n: int):
        if n < 2:
            raise ValueError(f"diff1d: n 은 2 이상이어야 합니다: {n}")
        super().__init__(n, n - 1)

    def _matvec(self, x: np.ndarray) -> np.ndarray:
        return np.diff(x)

    def _rmatvec(self, y: np.ndarray) -> np.ndarray:
        out = np.zeros(self._n_in)
        out[:-1] -= y
        out[1:] += y
        return out


class Grad2DAniso(LinearOperatorSpec):
    """
    비등방 2D 기울기 [∇x; ∇y]
    입력은 ny×nx 격자의 행 우선 평탄화, 출력은 x 차분 블록 다음 y 차분 블록
    """

    def __init__(self, nx: int, ny: int):
        if nx < 2 or ny < 2:
            raise ValueError(f"grad2d: 격자 크기는 2 이상이어야 합니다: nx={nx}, ny={ny}")
        self.nx = nx
        self.ny = ny
        self.n_x_block = ny * (nx - 1)
        super().__init__(nx * ny, ny * (nx - 1) + nx * (ny - 1))

    def _matvec(self, x: np.ndarray) -> np.ndarray:
        grid = x.reshape(self.ny, self.nx)
        return np.concatenate([np.diff(grid, axis=1).ravel(), np.diff(grid, axis=0).ravel()])

    def _rmatvec(self, y: np.ndarray) -> np.ndarray:
        gx = y[:self.n_x_block].reshape(self.ny, self.nx - 1)
        gy = y[self.n_x_block:].reshape(self.ny - 1, self.nx)
        out = np.zeros((self.ny, self.nx))
        out[:, :-1] -= gx
        out[:, 1:] += gx
        out[:-1, :] -= gy
        out[1:, :] += gy
        return out.ravel()


def dense_operator(matrix: np.ndarray) -> DenseOperator:
    return DenseOperator(matrix)


def identity(n: int) -> IdentityOperator:
    return IdentityOperator(n)


def diff1d(n: int) -> Diff1D:
    return Diff1D(n)


def grad2d_aniso(nx: int, ny: int) -> Grad2DAniso:
    return Grad2DAniso(nx, ny)


# ================================
# 적분 커널 (중점 구적법, 밀집 구체화)
# ================================

def _midpoints(lo: float, hi: float, n: int) -> np.ndarray:
    step = (hi - lo) / n
    return lo + (np.arange(n) + 0.5) * step


def dilat1d_kernel(n_model: int, n_data: int, depth_D: float,
                   length_A: float, scale_c: float) -> DenseOperator:
    """
    1D 팽창성 가상 소스의 수직 지표 변위 커널
    d(z) = c ∫ D u(ξ) dξ / (D² + (z−ξ)²)^{3/2},  ξ, z ∈ [0, A]
    """
    if depth_D <= 0:
        raise ValueError(f"depth_D 는 양수여야 합니다: {depth_D}")
    if length_A <= 0:
        raise ValueError(f"length_A 는 양수여야 합니다: {length_A}")
    if n_model < 1 or n_data < 1:
        raise ValueError(f"격자 크기는 1 이상이어야 합니다: n_model={n_model}, n_data={n_data}")

    xi = _midpoints(0.0, length_A, n_model)
    z = _midpoints(0.0, length_A, n_data)
    d_xi = length_A / n_model
    dist2 = cdist(z[:, None], xi[:, None], metric="sqeuclidean")
    matrix = scale_c * depth_D * d_xi / (depth_D ** 2 + dist2) ** 1.5
    logger.debug(f"🧮 dilat1d 커널 생성: {n_data}×{n_model}, D={depth_D}, A={length_A}")
    return DenseOperator(matrix)


def reservoir2d_kernel(n_side: int, depth_D: float, half_width_A: float,
                       scale_c: float) -> DenseOperator:
    """
    2D 저류층 압력 변화에 의한 지표 변위 커널
    모델/데이터 모두 [−A, A]² 위의 n_side×n_side 격자 (행 우선, 행 = y)
    """
    if depth_D <= 0:
        raise ValueError(f"depth_D 는 양수여야 합니다: {depth_D}")
    if half_width_A <= 0:
        raise ValueError(f"half_width_A 는 양수여야 합니다: {half_width_A}")
    if n_side < 1:
        raise ValueError(f"n_side 는 1 이상이어야 합니다: {n_side}")

    axis = _midpoints(-half_width_A, half_width_A, n_side)
    step = 2.0 * half_width_A / n_side
    yy, xx = np.meshgrid(axis, axis, indexing="ij")
    points = np.column_stack([xx.ravel(), yy.ravel()])
    dist2 = cdist(points, points, metric="sqeuclidean")
    matrix = scale_c * depth_D * step * step / (depth_D ** 2 + dist2) ** 1.5
    logger.debug(f"🧮 reservoir2d 커널 생성: {n_side}², D={depth_D}, A={half_width_A}")
    return DenseOperator(matrix)


# ================================
# 적층 연산자 F
# ================================

class StackedOperator(LinearOperatorSpec):
    """F u = [√α A u; √λ B u], b_op 가 None 이면 정규화 블록 없음 (K = 0)"""

    def __init__(self, a_op: LinearOperatorSpec, b_op: Optional[LinearOperatorSpec],
                 alpha: float, lam: float):
        if alpha <= 0:
            raise ValueError(f"alpha 는 양수여야 합니다: {alpha}")
        if lam < 0:
            raise ValueError(f"lambda 는 음수일 수 없습니다: {lam}")
        if b_op is not None and b_op.n_in != a_op.n_in:
            raise DimensionError(
                f"stack: A 의 정의역 {a_op.n_in} 과 B 의 정의역 {b_op.n_in} 이 다릅니다"
            )
        self.a_op = a_op
        self.b_op = b_op
        self.alpha = float(alpha)
        self.lam = float(lam)
        self.sqrt_alpha = float(np.sqrt(alpha))
        self.sqrt_lam = float(np.sqrt(lam))
        self.m = a_op.n_out
        self.k = b_op.n_out if b_op is not None else 0
        super().__init__(a_op.n_in, self.m + self.k)

    def _matvec(self, x: np.ndarray) -> np.ndarray:
        top = self.sqrt_alpha * self.a_op.apply(x)
        if self.b_op is None:
            return top
        return np.concatenate([top, self.sqrt_lam * self.b_op.apply(x)])

    def _rmatvec(self, y: np.ndarray) -> np.ndarray:
        out = self.sqrt_alpha * self.a_op.apply_adjoint(y[:self.m])
        if self.b_op is not None:
            out = out + self.sqrt_lam * self.b_op.apply_adjoint(y[self.m:])
        return out

    def rhs(self, d: np.ndarray, w: Optional[np.ndarray] = None) -> np.ndarray:
        """스택 우변 v = [√α d; √λ w]"""
        d = _as_vector(d, self.m, "stack.rhs(d)")
        if self.b_op is None:
            return self.sqrt_alpha * d
        w = _as_vector(w if w is not None else np.zeros(self.k), self.k, "stack.rhs(w)")
        return np.concatenate([self.sqrt_alpha * d, self.sqrt_lam * w])


def stack(a_op: LinearOperatorSpec, b_op: Optional[LinearOperatorSpec],
          alpha: float, lam: float) -> StackedOperator:
    return StackedOperator(a_op, b_op, alpha, lam)


# ================================
# 적용 횟수 카운터
# ================================

class OpCounter(LinearOperatorSpec):
    """
    A 래퍼: apply / apply_adjoint 호출을 각각 정확히 1씩 센다
    budget 은 A 와 Aᵀ 적용의 합에 대한 상한 (B 는 세지 않음)
    """

    def __init__(self, op: LinearOperatorSpec, budget: Optional[int] = None):
        super().__init__(op.n_in, op.n_out)
        self.op = op
        self.budget = budget
        self.n_apply_A = 0
        self.n_apply_At = 0
        self._paused = 0
        self._lock = threading.Lock()

    @property
    def used(self) -> int:
        return self.n_apply_A + self.n_apply_At

    def can_afford(self, cost: int) -> bool:
        return self.budget is None or self.used + cost <= self.budget

    def _charge(self, adjoint: bool) -> None:
        with self._lock:
            if self._paused:
                return
            if not self.can_afford(1):
                raise BudgetExceededError(f"예산 {self.budget} 초과 (사용: {self.used})")
            if adjoint:
                self.n_apply_At += 1
            else:
                self.n_apply_A += 1

    @contextmanager
    def paused(self) -> Iterator["OpCounter"]:
        """진단용 적용은 세지 않음"""
        with self._lock:
            self._paused += 1
        try:
            yield self
        finally:
            with self._lock:
                self._paused -= 1

    def _matvec(self, x: np.ndarray) -> np.ndarray:
        self._charge(adjoint=False)
        return self.op.apply(x)

    def _rmatvec(self, y: np.ndarray) -> np.ndarray:
        self._charge(adjoint=True)
        return self.op.apply_adjoint(y)
