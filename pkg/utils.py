"""
실험 실행 유틸리티
실행 (run), 솔버 비교 (compare), 조건수 출력 (cond), 콘솔 표시 기능 통합
"""

import hashlib
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from artifacts import (write_convergence_csv, write_f64, write_manifest,
                       write_pgm)
from config import VERSION, ExperimentConfig, SolverEntry
from harness import Problem, build_problem, estimate_condition
from logger_config import get_logger
from operators import stack
from solvers import (admm_exact, ccd_solve, fista_solve, ista_solve,
                     lmccd_solve, rcg_solve, scd_mm_solve)
from state import ConvergenceRecord

logger = get_logger("Utils")

SUMMARY_COLUMNS = ["lambda", "solver", "rel_error", "ops_A", "ops_At", "iterations",
                   "status", "kappa_normal", "data_sha256"]


# ================================
# UI / 디스플레이 관련 함수들
# ================================

def print_banner() -> None:
    """시스템 배너 출력"""
    print("=" * 70)
    print("🧭 CCD - 압축 켤레 방향 L1/TV 역문제 솔버")
    print("=" * 70)
    print("  • 솔버: admm-exact, ccd, lmccd, rcg, fista, ista, scd-mm")
    print("  • 명령: run <config.json> | compare <config.json> | cond <config.json>")
    print("-" * 70)


def print_system_info() -> None:
    """시스템 정보 출력"""
    print(f"  • 실행 시간: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    print(f"  • Python 버전: {sys.version.split()[0]}")
    print(f"  • 작업 디렉토리: {os.getcwd()}")
    print()


def print_run_summary(name: str, record: ConvergenceRecord, out_dir: Path) -> None:
    last = record.last
    print(f"\n✅ {name} 완료 ({record.status})")
    if last is not None:
        print(f"  • 반복: {last['iter']} | A: {last['ops_A']} | Aᵀ: {last['ops_At']}")
        print(f"  • 목적함수: {last['objective']:.6e}")
        if not math.isnan(last["rel_error"]):
            print(f"  • 상대 오차: {last['rel_error']:.6f}")
    print(f"  • 산출물: {out_dir}")


def print_summary_table(summary: pd.DataFrame) -> None:
    print("\n📊 비교 요약 (예산 기준 상대 오차)")
    print("─" * 70)
    print(summary.to_string(index=False, float_format=lambda v: f"{v:.6g}"))
    print("─" * 70)


# ================================
# 솔버 실행
# ================================

@dataclass
class RunResult:
    """솔버 1회 실행 결과"""
    name: str
    u: np.ndarray
    record: ConvergenceRecord
    wall_time: float
    artifacts: Dict[str, str] = field(default_factory=dict)


def run_solver(config: ExperimentConfig, problem: Problem) -> tuple[np.ndarray, ConvergenceRecord]:
    """설정된 솔버로 문제를 푼다"""
    a_op, b_op, d = problem.a_op, problem.b_op, problem.d
    common: Dict[str, Any] = {"u_true": problem.u_true}
    budget = config.budget
    solver = config.solver

    if solver == "admm-exact":
        state, record = admm_exact(a_op, b_op, d, config.alpha, config.lam,
                                   config.max_iters, config.tol, budget=budget, **common)
        return state.u, record
    if solver == "ccd":
        state, record = ccd_solve(a_op, b_op, d, config.alpha, config.lam,
                                  config.max_iters, config.tol, budget=budget, **common)
        return state.u, record
    if solver == "lmccd":
        state, record = lmccd_solve(a_op, b_op, d, config.alpha, config.lam, config.memory_m,
                                    config.max_iters, config.tol, budget=budget, **common)
        return state.u, record
    if solver == "rcg":
        state, record = rcg_solve(a_op, b_op, d, config.alpha, config.lam, config.n_cg,
                                  config.max_iters, config.tol, budget=budget, **common)
        return state.u, record
    if solver in ("fista", "ista"):
        solve = fista_solve if solver == "fista" else ista_solve
        return solve(a_op, d, config.alpha, config.gamma, config.max_iters, config.tol,
                     b_op=b_op, budget=budget, **common)
    if solver == "scd-mm":
        if problem.c_vec is None:
            raise ValueError("scd-mm 에는 제약 벡터 c 가 필요합니다")
        return scd_mm_solve(a_op, b_op, d, problem.c_vec, config.lam, config.max_iters,
                            config.tol, memory_m=config.memory_m, budget=budget, **common)
    raise ValueError(f"솔버가 지정되지 않았습니다: {solver}")


def _timed_solve(name: str, config: ExperimentConfig, problem: Problem) -> RunResult:
    start = time.perf_counter()
    u, record = run_solver(config, problem)
    return RunResult(name, u, record, time.perf_counter() - start)


def _write_problem_arrays(problem: Problem, out_dir: Path) -> Dict[str, str]:
    """data.f64 / truth.f64 (+ 2D 면 PGM)"""
    paths = {"data": write_f64(out_dir / "data.f64", problem.d.reshape(problem.data_shape))}
    if problem.u_true is not None:
        paths["truth"] = write_f64(out_dir / "truth.f64", problem.u_true.reshape(problem.model_shape))
    if len(problem.data_shape) == 2:
        paths["data_pgm"] = write_pgm(out_dir / "data.pgm", problem.d.reshape(problem.data_shape))
    if problem.u_true is not None and len(problem.model_shape) == 2:
        paths["truth_pgm"] = write_pgm(out_dir / "truth.pgm", problem.u_true.reshape(problem.model_shape))
    return {key: path.name for key, path in paths.items()}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(config: ExperimentConfig, out_dir: Path) -> RunResult:
    """단일 솔버 실행: convergence.csv, model.f64, truth.f64, data.f64, manifest.json"""
    if config.solver is None:
        raise ValueError("run 에는 solver 가 필요합니다")
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = build_problem(config)
    result = _timed_solve(config.solver, config, problem)

    artifacts = {"convergence": write_convergence_csv(result.record, out_dir / "convergence.csv").name,
                 "model": write_f64(out_dir / "model.f64", result.u.reshape(problem.model_shape)).name}
    if len(problem.model_shape) == 2:
        artifacts["model_pgm"] = write_pgm(out_dir / "model.pgm", result.u.reshape(problem.model_shape)).name
    artifacts.update(_write_problem_arrays(problem, out_dir))
    result.artifacts = artifacts

    write_manifest(out_dir / "manifest.json", {
        "config": config.echo(),
        "artifacts": artifacts,
        "wall_time_s": result.wall_time,
        "metrics": {**result.record.final_metrics(), "status": result.record.status},
        "version": VERSION,
        "seed": config.noise.seed,
    })
    logger.performance(f"run {config.solver}", result.wall_time, f"상태: {result.record.status}")
    print_run_summary(config.solver, result.record, out_dir)
    return result


def _kappa_normal(config: ExperimentConfig, problem: Problem, lam: float) -> float:
    alpha = config.alpha if config.alpha is not None else 1.0
    return estimate_condition(stack(problem.a_op, problem.b_op, alpha, lam), of="normal")


def compare_solvers(config: ExperimentConfig, out_dir: Path, jobs: int = 1) -> pd.DataFrame:
    """
    같은 문제 인스턴스 (같은 시드/잡음) 에서 여러 솔버 비교
    솔버별 CSV + 예산 기준 상대 오차 요약표 (λ 스윕이면 λ 별로)
    """
    entries: List[SolverEntry] = config.solvers or []
    if len(entries) < 2:
        raise ValueError(f"compare 에는 솔버 항목이 2개 이상 필요합니다 (현재 {len(entries)}개)")
    out_dir.mkdir(parents=True, exist_ok=True)

    problem = build_problem(config)
    shared = _write_problem_arrays(problem, out_dir)
    data_hash = _sha256(out_dir / shared["data"])

    lambdas: List[Optional[float]] = list(config.sweep) if config.sweep else [config.lam]
    tasks = []
    for lam in lambdas:
        for entry in entries:
            entry_config = config.for_entry(entry, lam)
            tasks.append((lam, entry.name(), entry_config))

    keys = [(lam, name) for lam, name, _ in tasks]
    if len(set(keys)) != len(keys):
        raise ValueError("compare 솔버 항목 이름이 중복됩니다 (label 로 구분하세요)")

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        futures = [pool.submit(_timed_solve, name, cfg, problem) for _, name, cfg in tasks]
        results = [f.result() for f in futures]

    kappas = {lam: (_kappa_normal(config, problem, lam) if lam is not None else math.nan)
              for lam in lambdas}
    rows = []
    for (lam, name, cfg), result in zip(tasks, results):
        sub_dir = out_dir / f"lambda_{lam:g}" if config.sweep else out_dir
        sub_dir.mkdir(parents=True, exist_ok=True)
        write_convergence_csv(result.record, sub_dir / f"convergence_{name}.csv")
        write_f64(sub_dir / f"model_{name}.f64", result.u.reshape(problem.model_shape))
        last = result.record.last or {}
        rows.append({
            "lambda": lam if lam is not None else math.nan,
            "solver": name,
            "rel_error": last.get("rel_error", math.nan),
            "ops_A": last.get("ops_A", 0),
            "ops_At": last.get("ops_At", 0),
            "iterations": last.get("iter", 0),
            "status": result.record.status,
            "kappa_normal": kappas[lam],
            "data_sha256": data_hash,
        })

    summary = (pd.DataFrame(rows, columns=SUMMARY_COLUMNS)
               .sort_values(["lambda", "rel_error"], kind="stable")
               .reset_index(drop=True))
    summary.to_csv(out_dir / "summary.csv", index=False, float_format="%.17g", na_rep="nan",
                   lineterminator="\n")
    write_manifest(out_dir / "manifest.json", {
        "config": config.echo(),
        "artifacts": {**shared, "summary": "summary.csv"},
        "wall_time_s": sum(r.wall_time for r in results),
        "metrics": {"runs": len(results)},
        "version": VERSION,
        "seed": config.noise.seed,
    })
    print_summary_table(summary)
    return summary


def print_condition(config: ExperimentConfig) -> Dict[float, Dict[str, float]]:
    """
    설정된 (α, λ, A, B) 의 κ(F), κ(FᵀF) 출력, sweep 이 있으면 λ 별로
    lambda 도 sweep 도 없으면 λ = 0, 즉 √α A 만의 조건수 (α 가 없으면 1)
    """
    problem = build_problem(config)
    alpha = config.alpha if config.alpha is not None else 1.0
    lambdas = list(config.sweep) if config.sweep else [config.lam if config.lam is not None else 0.0]

    results: Dict[float, Dict[str, float]] = {}
    print(f"\n📐 조건수 ({config.problem}, α={alpha:g})")
    for lam in lambdas:
        f_op = stack(problem.a_op, problem.b_op, alpha, lam)
        kappa = estimate_condition(f_op, of="operator")
        kappa_normal = estimate_condition(f_op, of="normal")
        results[lam] = {"kappa": kappa, "kappa_normal": kappa_normal}
        print(f"  • λ={lam:g}: κ(F) = {kappa:.6g} | κ(FᵀF) = {kappa_normal:.6g}")
    return results
