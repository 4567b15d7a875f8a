"""
외부 반복 솔버
- admm_exact: 내부 최소제곱을 직접 해법으로 푸는 ADMM
- scd_solve: 조향 켤레 방향 (가변 우변)
- ccd_solve / lmccd_solve: 압축 켤레 방향 (무제한 / 제한 메모리)
- rcg_solve: ADMM + 핫 리스타트 CGNE
- ista_solve / fista_solve: L1 문제 (B = I) 기준선
- scd_mm_solve: 조향 켤레 방향 + 승수법 (등식 제약 최소제곱)

모든 솔버는 A 를 OpCounter 로 감싸 A/Aᵀ 적용을 센다. 목적함수 등 진단값은 세지 않는다.
"""

import math
import time
from typing import Callable, Optional, Union

import numpy as np

from directions import SteeredConjugateDirections
from harness import relative_error
from krylov import DirectLeastSquares, cgne_iterator, power_iteration
from logger_config import get_logger
from operators import (IdentityOperator, LinearOperatorSpec, OpCounter,
                       StackedOperator, _as_vector, stack)
from proximal import Objective, objective_value, shrink
from state import (ConvergenceRecord, FistaState, IterationSnapshot,
                   SolverState)

logger = get_logger("Solvers")

Callback = Callable[[IterationSnapshot], None]
RhsProvider = Union[np.ndarray, Callable[[int, np.ndarray], np.ndarray]]

# 목적함수가 이 횟수만큼 연속 증가하면 발산으로 판정
DIVERGENCE_STREAK = 10


def relative_change(u_new: np.ndarray, u_old: np.ndarray) -> float:
    """‖u_new − u_old‖ / ‖u_old‖, ‖u_old‖ = 0 이면 절대 변화"""
    diff = float(np.linalg.norm(u_new - u_old))
    old = float(np.linalg.norm(u_old))
    return diff if old == 0.0 else diff / old


class _RunMonitor:
    """반복별 기록, 정지 판정, 콜백 호출"""

    def __init__(self, name: str, counter: OpCounter, tol: float,
                 u_true: Optional[np.ndarray], callback: Optional[Callback],
                 detect_divergence: bool = False):
        self.name = name
        self.detect_divergence = detect_divergence
        self.counter = counter
        self.tol = tol
        self.u_true = u_true
        self.callback = callback
        self.record = ConvergenceRecord(name)
        self._last_objective = math.inf
        self._increases = 0
        self._start = time.perf_counter()

    def observe(self, snapshot: IterationSnapshot, u_old: np.ndarray,
                objective: float, primal_residual: float = math.nan) -> bool:
        """기록 후 정지 여부 반환"""
        u = snapshot.u
        change = relative_change(u, u_old)
        error = relative_error(u, self.u_true) if self.u_true is not None else math.nan
        self.record.append(snapshot.iteration, self.counter.n_apply_A, self.counter.n_apply_At,
                           objective, primal_residual, change, error)
        logger.iteration(self.name, snapshot.iteration, objective, change)
        if self.callback is not None:
            self.callback(snapshot)

        if not math.isfinite(objective) or not np.all(np.isfinite(u)):
            self.record.status = "diverged"
            logger.warning(f"⚠️ {self.name}: 유한하지 않은 반복값, 중단")
            return True
        if objective > self._last_objective:
            self._increases += 1
        else:
            self._increases = 0
        self._last_objective = objective
        if self.detect_divergence and self._increases >= DIVERGENCE_STREAK:
            self.record.status = "diverged"
            logger.warning(
                f"⚠️ {self.name}: 목적함수 {DIVERGENCE_STREAK}회 연속 증가, 발산으로 판정 (k={snapshot.iteration})"
            )
            return True
        if change <= self.tol:
            self.record.status = "converged"
            return True
        return False

    def affordable(self, cost: int) -> bool:
        if self.counter.can_afford(cost):
            return True
        self.record.status = "budget"
        logger.budget_stop(self.name, self.counter.used, self.counter.budget or 0)
        return False

    def finish(self) -> ConvergenceRecord:
        if self.record.status == "running":
            self.record.status = "max_iters"
        logger.solver_end(self.name, self.record.status, len(self.record),
                          self.counter.n_apply_A, self.counter.n_apply_At)
        logger.performance(self.name, time.perf_counter() - self._start)
        return self.record


def _check_admm_params(a_op: LinearOperatorSpec, b_op: LinearOperatorSpec,
                       d: np.ndarray, alpha: float, lam: float) -> np.ndarray:
    if b_op.n_in != a_op.n_in:
        raise ValueError(f"A 의 정의역 {a_op.n_in} 과 B 의 정의역 {b_op.n_in} 이 다릅니다")
    if not alpha > 0:
        raise ValueError(f"alpha 는 양수여야 합니다: {alpha}")
    if not lam > 0:
        raise ValueError(f"lambda 는 양수여야 합니다: {lam}")
    return _as_vector(d, a_op.n_out, "d")


def _admm_diagnostics(counter: OpCounter, b_op: LinearOperatorSpec, d: np.ndarray,
                      alpha: float, state: SolverState) -> tuple[float, float]:
    with counter.paused():
        objective = objective_value(Objective(counter, b_op, d, alpha), state.u)
    primal = float(np.linalg.norm(state.z - b_op.apply(state.u)))
    return objective, primal


def _shrink_step(state: SolverState, b_op: LinearOperatorSpec, u: np.ndarray,
                 lam: float) -> None:
    """z_{k+1} = shrink(B u − b_k, 1/λ), b_{k+1} = b_k + z_{k+1} − B u"""
    bu = b_op.apply(u)
    state.z = shrink(bu - state.b, 1.0 / lam)
    state.b = state.b + state.z - bu


# ================================
# ADMM (정확한 내부 해)
# ================================

def admm_exact(a_op: LinearOperatorSpec, b_op: LinearOperatorSpec, d: np.ndarray,
               alpha: float, lam: float, max_iters: int, tol: float = 0.0, *,
               u_true: Optional[np.ndarray] = None, budget: Optional[int] = None,
               callback: Optional[Callback] = None) -> tuple[SolverState, ConvergenceRecord]:
    """
    4단계를 FᵀF 밀집 분해로 정확히 푸는 ADMM
    비용: F 구체화에 A 적용 N회, 이후 반복당 Aᵀ 1회
    예산이 N + 1 보다 작으면 분해 없이 빈 기록 (status "budget") 을 돌려준다
    """
    d = _check_admm_params(a_op, b_op, d, alpha, lam)
    counter = OpCounter(a_op, budget)
    f_op = stack(counter, b_op, alpha, lam)
    logger.solver_start("admm-exact", {"alpha": alpha, "lambda": lam, "N": a_op.n_in, "budget": budget})

    state = SolverState.zeros(a_op.n_in, b_op.n_out)
    monitor = _RunMonitor("admm-exact", counter, tol, u_true, callback)
    if not monitor.affordable(a_op.n_in + 1):
        return state, monitor.finish()

    direct = DirectLeastSquares(f_op)
    for _ in range(max_iters):
        if not monitor.affordable(1):
            break
        u_old = state.u
        state.u = direct.solve(f_op.rhs(d, state.z + state.b))
        _shrink_step(state, b_op, state.u, lam)
        state.iteration += 1

        objective, primal = _admm_diagnostics(counter, b_op, d, alpha, state)
        snapshot = IterationSnapshot(state.iteration, state.u, state.z, state.b)
        if monitor.observe(snapshot, u_old, objective, primal):
            break
    return state, monitor.finish()


# ================================
# 조향 켤레 방향 계열
# ================================

def _counted_stack(f_op: LinearOperatorSpec, budget: Optional[int]) -> tuple[LinearOperatorSpec, OpCounter]:
    """StackedOperator 면 A 만 세고, 아니면 F 전체를 센다"""
    if isinstance(f_op, StackedOperator):
        counter = OpCounter(f_op.a_op, budget)
        return stack(counter, f_op.b_op, f_op.alpha, f_op.lam), counter
    counter = OpCounter(f_op, budget)
    return counter, counter


def scd_solve(f_op: LinearOperatorSpec, rhs_sequence: RhsProvider, max_iters: int,
              tol: float = 0.0, *, budget: Optional[int] = None,
              memory_m: Optional[int] = None,
              callback: Optional[Callback] = None) -> tuple[np.ndarray, ConvergenceRecord]:
    """
    조향 켤레 방향으로 ‖F u − v_k‖ 최소화
    rhs_sequence 는 고정 벡터 또는 v_k = rhs(k, u_k) 를 주는 함수
    """
    counted, counter = _counted_stack(f_op, budget)
    if callable(rhs_sequence):
        provider = rhs_sequence
    else:
        fixed = _as_vector(rhs_sequence, f_op.n_out, "scd(v)")
        provider = lambda k, u: fixed  # noqa: E731

    logger.solver_start("scd", {"N": f_op.n_in, "M+K": f_op.n_out})
    monitor = _RunMonitor("scd", counter, tol, None, callback)
    u = np.zeros(f_op.n_in)
    if not monitor.affordable(2):
        return u, monitor.finish()

    capacity = memory_m + 1 if memory_m is not None else None
    engine = SteeredConjugateDirections(counted, provider(0, u), capacity)
    for k in range(max_iters):
        if not monitor.affordable(2):
            break
        u_old = u
        u = engine.step(lambda u_new: provider(k + 1, u_new))

        with counter.paused():
            misfit = counted.apply(u) - engine.v_used
        snapshot = IterationSnapshot(engine.iteration, u, rhs=engine.v_used, store=engine.store)
        if monitor.observe(snapshot, u_old, 0.5 * float(misfit @ misfit)):
            break
    return u, monitor.finish()


def _compressive_cd(name: str, a_op: LinearOperatorSpec, b_op: LinearOperatorSpec,
                    d: np.ndarray, alpha: float, lam: float, capacity: Optional[int],
                    max_iters: int, tol: float, u_true: Optional[np.ndarray],
                    budget: Optional[int], callback: Optional[Callback]
                    ) -> tuple[SolverState, ConvergenceRecord]:
    d = _check_admm_params(a_op, b_op, d, alpha, lam)
    counter = OpCounter(a_op, budget)
    f_op = stack(counter, b_op, alpha, lam)
    state = SolverState.zeros(a_op.n_in, b_op.n_out)
    monitor = _RunMonitor(name, counter, tol, u_true, callback)
    if not monitor.affordable(2):
        return state, monitor.finish()

    def admm_update(u: np.ndarray) -> np.ndarray:
        _shrink_step(state, b_op, u, lam)
        return f_op.rhs(d, state.z + state.b)

    engine = SteeredConjugateDirections(f_op, f_op.rhs(d, state.z + state.b), capacity)
    for _ in range(max_iters):
        if not monitor.affordable(2):
            break
        u_old = state.u
        state.u = engine.step(admm_update)
        state.iteration += 1

        objective, primal = _admm_diagnostics(counter, b_op, d, alpha, state)
        snapshot = IterationSnapshot(state.iteration, state.u, state.z, state.b,
                                     rhs=engine.v_used, store=engine.store)
        if monitor.observe(snapshot, u_old, objective, primal):
            break
    return state, monitor.finish()


def ccd_solve(a_op: LinearOperatorSpec, b_op: LinearOperatorSpec, d: np.ndarray,
              alpha: float, lam: float, max_iters: int, tol: float = 0.0, *,
              u_true: Optional[np.ndarray] = None, budget: Optional[int] = None,
              callback: Optional[Callback] = None) -> tuple[SolverState, ConvergenceRecord]:
    """압축 켤레 방향 (모든 방향 보관)"""
    logger.solver_start("ccd", {"alpha": alpha, "lambda": lam, "budget": budget})
    return _compressive_cd("ccd", a_op, b_op, d, alpha, lam, None,
                           max_iters, tol, u_true, budget, callback)


def lmccd_solve(a_op: LinearOperatorSpec, b_op: LinearOperatorSpec, d: np.ndarray,
                alpha: float, lam: float, memory_m: int, max_iters: int,
                tol: float = 0.0, *, u_true: Optional[np.ndarray] = None,
                budget: Optional[int] = None,
                callback: Optional[Callback] = None) -> tuple[SolverState, ConvergenceRecord]:
    """제한 메모리 압축 켤레 방향, m+1 칸 원형 버퍼"""
    if memory_m < 0:
        raise ValueError(f"memory_m 은 0 이상이어야 합니다: {memory_m}")
    logger.solver_start("lmccd", {"alpha": alpha, "lambda": lam, "m": memory_m, "budget": budget})
    return _compressive_cd("lmccd", a_op, b_op, d, alpha, lam, memory_m + 1,
                           max_iters, tol, u_true, budget, callback)


# ================================
# ADMM + 핫 리스타트 CGNE
# ================================

def rcg_solve(a_op: LinearOperatorSpec, b_op: LinearOperatorSpec, d: np.ndarray,
              alpha: float, lam: float, n_cg: int, max_iters: int, tol: float = 0.0, *,
              u_true: Optional[np.ndarray] = None, budget: Optional[int] = None,
              callback: Optional[Callback] = None) -> tuple[SolverState, ConvergenceRecord]:
    """
    외부 반복마다 u_k 에서 시작하는 CGNE n_cg 회
    비용: 시작 잔차 A 1회 + 내부 반복마다 A, Aᵀ 각 1회
    """
    if n_cg < 1:
        raise ValueError(f"n_cg 는 1 이상이어야 합니다: {n_cg}")
    d = _check_admm_params(a_op, b_op, d, alpha, lam)
    counter = OpCounter(a_op, budget)
    f_op = stack(counter, b_op, alpha, lam)
    logger.solver_start("rcg", {"alpha": alpha, "lambda": lam, "n_cg": n_cg, "budget": budget})

    state = SolverState.zeros(a_op.n_in, b_op.n_out)
    monitor = _RunMonitor("rcg", counter, tol, u_true, callback)
    for _ in range(max_iters):
        if not monitor.affordable(2 * n_cg + 1):
            break
        u_old = state.u
        u_new = state.u.copy()
        inner = 0
        for cg in cgne_iterator(f_op, f_op.rhs(d, state.z + state.b), state.u):
            u_new, inner = cg.x, cg.iteration
            if inner >= n_cg:
                break
        monitor.record.inner_iterations.append(inner)

        state.u = u_new.copy()
        _shrink_step(state, b_op, state.u, lam)
        state.iteration += 1

        objective, primal = _admm_diagnostics(counter, b_op, d, alpha, state)
        snapshot = IterationSnapshot(state.iteration, state.u, state.z, state.b)
        if monitor.observe(snapshot, u_old, objective, primal):
            break
    return state, monitor.finish()


# ================================
# ISTA / FISTA (B = I)
# ================================

def _l1_setup(name: str, a_op: LinearOperatorSpec, d: np.ndarray, alpha: float,
              gamma: Optional[float], b_op: Optional[LinearOperatorSpec],
              budget: Optional[int]) -> tuple[np.ndarray, OpCounter, Objective, float]:
    if b_op is not None and not isinstance(b_op, IdentityOperator):
        raise ValueError(f"{name} 는 B = I 인 L1 문제에만 적용됩니다: {b_op!r}")
    if not alpha > 0:
        raise ValueError(f"alpha 는 양수여야 합니다: {alpha}")
    d = _as_vector(d, a_op.n_out, "d")
    counter = OpCounter(a_op, budget)
    objective = Objective(counter, IdentityOperator(a_op.n_in), d, alpha)
    if gamma is None:
        with counter.paused():
            sigma2 = power_iteration(counter, 100)
        gamma = 0.95 / (alpha * sigma2)
        logger.debug(f"📐 {name} 기본 스텝: γ={gamma:.4e} (σ̂²={sigma2:.4e})")
    elif not gamma > 0:
        raise ValueError(f"gamma 는 양수여야 합니다: {gamma}")
    return d, counter, objective, float(gamma)


def _gradient(counter: OpCounter, u: np.ndarray, d: np.ndarray, alpha: float) -> np.ndarray:
    return alpha * counter.apply_adjoint(counter.apply(u) - d)


def ista_solve(a_op: LinearOperatorSpec, d: np.ndarray, alpha: float,
               gamma: Optional[float], max_iters: int, tol: float = 0.0, *,
               b_op: Optional[LinearOperatorSpec] = None,
               u_true: Optional[np.ndarray] = None, budget: Optional[int] = None,
               callback: Optional[Callback] = None) -> tuple[np.ndarray, ConvergenceRecord]:
    """u_{k+1} = shrink(u_k − γαAᵀ(Au_k − d), γ)"""
    d, counter, objective, gamma = _l1_setup("ista", a_op, d, alpha, gamma, b_op, budget)
    logger.solver_start("ista", {"alpha": alpha, "gamma": gamma, "budget": budget})

    monitor = _RunMonitor("ista", counter, tol, u_true, callback, detect_divergence=True)
    u = np.zeros(a_op.n_in)
    for k in range(max_iters):
        if not monitor.affordable(2):
            break
        u_old = u
        u = shrink(u - gamma * _gradient(counter, u, d, alpha), gamma)
        with counter.paused():
            value = objective.value(u)
        if monitor.observe(IterationSnapshot(k + 1, u), u_old, value):
            break
    return u, monitor.finish()


def fista_solve(a_op: LinearOperatorSpec, d: np.ndarray, alpha: float,
                gamma: Optional[float], max_iters: int, tol: float = 0.0, *,
                b_op: Optional[LinearOperatorSpec] = None,
                u_true: Optional[np.ndarray] = None, budget: Optional[int] = None,
                callback: Optional[Callback] = None) -> tuple[np.ndarray, ConvergenceRecord]:
    """
    FISTA
    y_{k+1} = shrink(u_k − γαAᵀ(Au_k − d), γ)
    ζ_{k+1} = (1 + √(1 + 4ζ_k²)) / 2
    u_{k+1} = y_{k+1} + ((ζ_k − 1)/ζ_{k+1})(y_{k+1} − y_k)
    반환값과 기록은 임계값 처리된 y 기준
    """
    d, counter, objective, gamma = _l1_setup("fista", a_op, d, alpha, gamma, b_op, budget)
    logger.solver_start("fista", {"alpha": alpha, "gamma": gamma, "budget": budget})

    monitor = _RunMonitor("fista", counter, tol, u_true, callback, detect_divergence=True)
    fs = FistaState(u=np.zeros(a_op.n_in), y_prev=np.zeros(a_op.n_in), gamma=gamma)
    for k in range(max_iters):
        if not monitor.affordable(2):
            break
        y = shrink(fs.u - fs.gamma * _gradient(counter, fs.u, d, alpha), fs.gamma)
        zeta_next = fs.next_zeta()
        snapshot = IterationSnapshot(k + 1, y, zeta=fs.zeta)
        y_old = fs.y_prev
        fs.u = y + ((fs.zeta - 1.0) / zeta_next) * (y - fs.y_prev)
        fs.y_prev = y
        fs.zeta = zeta_next

        with counter.paused():
            value = objective.value(y)
        if monitor.observe(snapshot, y_old, value):
            break
    return fs.y_prev, monitor.finish()


# ================================
# 조향 켤레 방향 + 승수법
# ================================

def scd_mm_solve(a_op: LinearOperatorSpec, b_op: LinearOperatorSpec, d: np.ndarray,
                 c_vec: np.ndarray, lam: float, max_iters: int, tol: float = 0.0, *,
                 memory_m: Optional[int] = None, u_true: Optional[np.ndarray] = None,
                 budget: Optional[int] = None,
                 callback: Optional[Callback] = None) -> tuple[np.ndarray, ConvergenceRecord]:
    """
    ‖A u − d‖² → min, B u = c
    F 는 α = 1 인 적층 연산자, v_k = [d; √λ(c + b_k)], b_{k+1} = b_k + c − B u_{k+1}
    memory_m 을 주면 제한 메모리 원형 버퍼를 쓴다
    """
    d = _check_admm_params(a_op, b_op, d, 1.0, lam)
    c_vec = _as_vector(c_vec, b_op.n_out, "c")
    if memory_m is not None and memory_m < 0:
        raise ValueError(f"memory_m 은 0 이상이어야 합니다: {memory_m}")
    counter = OpCounter(a_op, budget)
    f_op = stack(counter, b_op, 1.0, lam)
    logger.solver_start("scd-mm", {"lambda": lam, "K": b_op.n_out, "m": memory_m})

    b = np.zeros(b_op.n_out)
    u = np.zeros(a_op.n_in)
    monitor = _RunMonitor("scd-mm", counter, tol, u_true, callback)
    if not monitor.affordable(2):
        return u, monitor.finish()

    def multiplier_update(u_new: np.ndarray) -> np.ndarray:
        nonlocal b
        b = b + c_vec - b_op.apply(u_new)
        return f_op.rhs(d, c_vec + b)

    capacity = memory_m + 1 if memory_m is not None else None
    engine = SteeredConjugateDirections(f_op, f_op.rhs(d, c_vec + b), capacity)
    for _ in range(max_iters):
        if not monitor.affordable(2):
            break
        u_old = u
        u = engine.step(multiplier_update)

        with counter.paused():
            misfit = counter.apply(u) - d
        violation = float(np.linalg.norm(b_op.apply(u) - c_vec))
        snapshot = IterationSnapshot(engine.iteration, u, b=b, rhs=engine.v_used, store=engine.store)
        if monitor.observe(snapshot, u_old, float(misfit @ misfit), violation):
            break
    return u, monitor.finish()
