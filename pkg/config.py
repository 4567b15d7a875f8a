"""
실험 설정 모델 (JSON) 과 프리셋
프리셋 기본값 → 설정 파일 → CLI 오버라이드 순으로 병합한 뒤 pydantic 으로 검증한다
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from logger_config import get_logger

logger = get_logger("Config")

VERSION = "1.0.0"

ProblemName = Literal["denoise2d", "spikes1d", "pressure2d", "custom"]
SolverName = Literal["admm-exact", "ccd", "lmccd", "rcg", "fista", "ista", "scd-mm"]
PresetName = Literal["denoise", "spikes", "pressure"]
RegularizerName = Literal["identity", "diff1d", "grad2d"]

# 솔버별로 받는 매개변수
SOLVER_FIELDS: Dict[str, set[str]] = {
    "admm-exact": {"alpha", "lam"},
    "ccd": {"alpha", "lam"},
    "lmccd": {"alpha", "lam", "memory_m"},
    "rcg": {"alpha", "lam", "n_cg"},
    "fista": {"alpha", "gamma"},
    "ista": {"alpha", "gamma"},
    "scd-mm": {"lam", "memory_m"},
}
REQUIRED_FIELDS: Dict[str, set[str]] = {
    "admm-exact": {"alpha", "lam"},
    "ccd": {"alpha", "lam"},
    "lmccd": {"alpha", "lam", "memory_m"},
    "rcg": {"alpha", "lam", "n_cg"},
    "fista": {"alpha"},
    "ista": {"alpha"},
    "scd-mm": {"lam"},
}
SOLVER_PARAMS = ("alpha", "lam", "memory_m", "n_cg", "gamma")


class NoiseSpec(BaseModel):
    """저파수 제거 가우시안 잡음"""
    model_config = ConfigDict(extra="forbid")

    sigma_rel: float = Field(default=0.15, ge=0.0, description="최대 신호 진폭 대비 표준편차")
    mute_fraction: float = Field(default=0.25, ge=0.0, description="이 비율 × 나이퀴스트 아래 파수 제거")
    seed: int = Field(default=0, ge=0, lt=2 ** 64, description="난수 시드 (u64)")


class GridSpec(BaseModel):
    """문제별 격자 크기"""
    model_config = ConfigDict(extra="forbid")

    nx: Optional[int] = Field(default=None, ge=2, description="2D 격자 열 수")
    ny: Optional[int] = Field(default=None, ge=2, description="2D 격자 행 수")
    n_model: Optional[int] = Field(default=None, ge=16, description="1D 모델 샘플 수")
    n_data: Optional[int] = Field(default=None, ge=1, description="1D 데이터 샘플 수")
    n_side: Optional[int] = Field(default=None, ge=10, description="저류층 격자 한 변")


class KernelSpec(BaseModel):
    """적분 커널 매개변수 (km)"""
    model_config = ConfigDict(extra="forbid")

    depth_D: float = Field(gt=0.0, description="소스 깊이 D")
    length_A: float = Field(gt=0.0, description="구간 길이 A (2D 는 반폭)")
    scale_c: float = Field(description="스케일 상수 c")


class CustomSpec(BaseModel):
    """f64 산출물에서 읽는 사용자 문제"""
    model_config = ConfigDict(extra="forbid")

    a_matrix: Path = Field(description="M×N 행렬 (.f64)")
    data: Path = Field(description="데이터 벡터 d (.f64)")
    regularizer: RegularizerName = Field(default="identity", description="정규화 연산자 B")
    nx: Optional[int] = Field(default=None, ge=2)
    ny: Optional[int] = Field(default=None, ge=2)
    truth: Optional[Path] = Field(default=None, description="참모델 (.f64)")
    constraint: Optional[Path] = Field(default=None, description="scd-mm 제약 벡터 c (.f64)")


def _check_solver_params(solver: Optional[str], values: Dict[str, Any], where: str) -> None:
    if solver is None:
        return
    allowed = SOLVER_FIELDS[solver]
    extra = [name for name in SOLVER_PARAMS if values.get(name) is not None and name not in allowed]
    if extra:
        shown = ", ".join("lambda" if n == "lam" else n for n in extra)
        raise ValueError(f"{where}: 솔버 '{solver}' 는 다음 매개변수를 받지 않습니다: {shown}")
    missing = [name for name in REQUIRED_FIELDS[solver] if values.get(name) is None]
    if missing:
        shown = ", ".join("lambda" if n == "lam" else n for n in missing)
        raise ValueError(f"{where}: 솔버 '{solver}' 에 필요한 매개변수가 없습니다: {shown}")


class SolverEntry(BaseModel):
    """compare 용 솔버 항목"""
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    solver: SolverName
    label: Optional[str] = Field(default=None, description="출력 파일/요약 표에 쓰일 이름")
    alpha: Optional[float] = Field(default=None, gt=0.0)
    lam: Optional[float] = Field(default=None, gt=0.0, alias="lambda")
    memory_m: Optional[int] = Field(default=None, ge=0)
    n_cg: Optional[int] = Field(default=None, ge=1)
    gamma: Optional[float] = Field(default=None, gt=0.0)

    @model_validator(mode="after")
    def _solver_specific(self) -> "SolverEntry":
        values = self.model_dump()
        allowed = SOLVER_FIELDS[self.solver]
        extra = [n for n in ("memory_m", "n_cg", "gamma") if values.get(n) is not None and n not in allowed]
        if extra:
            raise ValueError(f"솔버 '{self.solver}' 는 다음 매개변수를 받지 않습니다: {', '.join(extra)}")
        return self

    def name(self) -> str:
        if self.label:
            return self.label
        if self.solver == "rcg" and self.n_cg is not None:
            return f"rcg-nc{self.n_cg}"
        if self.solver == "lmccd" and self.memory_m is not None:
            return f"lmccd-m{self.memory_m}"
        return self.solver


class ExperimentConfig(BaseModel):
    """실험 1회 (run) 또는 여러 솔버 비교 (compare) 설정"""
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    preset: Optional[PresetName] = Field(default=None, description="기본값을 채울 프리셋")
    problem: ProblemName
    solver: Optional[SolverName] = Field(default=None, description="run 에서 사용할 솔버")
    alpha: Optional[float] = Field(default=None, gt=0.0, description="데이터 적합 가중치 α")
    lam: Optional[float] = Field(default=None, gt=0.0, alias="lambda", description="벌점 가중치 λ")
    memory_m: Optional[int] = Field(default=None, ge=0, description="제한 메모리 크기 m")
    n_cg: Optional[int] = Field(default=None, ge=1, description="외부 반복당 CGNE 반복 수 N_c")
    gamma: Optional[float] = Field(default=None, gt=0.0, description="ISTA/FISTA 스텝 (없으면 자동)")
    budget: Optional[int] = Field(default=None, ge=1, description="A/Aᵀ 적용 합계 상한")
    max_iters: int = Field(default=10000, ge=1, description="최대 외부 반복 수")
    tol: float = Field(default=0.0, ge=0.0, description="상대 변화 정지 기준")
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    grid: GridSpec = Field(default_factory=GridSpec)
    kernel: Optional[KernelSpec] = None
    custom: Optional[CustomSpec] = None
    solvers: Optional[List[SolverEntry]] = Field(default=None, description="compare 솔버 목록")
    sweep: Optional[List[float]] = Field(default=None, description="compare λ 스윕")

    @model_validator(mode="after")
    def _consistency(self) -> "ExperimentConfig":
        _check_solver_params(self.solver, self.model_dump(), "config")
        if self.problem == "custom" and self.custom is None:
            raise ValueError("problem 'custom' 에는 custom 항목이 필요합니다")
        if self.problem in ("spikes1d", "pressure2d") and self.kernel is None:
            raise ValueError(f"problem '{self.problem}' 에는 kernel 항목이 필요합니다")
        if self.sweep is not None and any(not v > 0 for v in self.sweep):
            raise ValueError("sweep 의 λ 는 모두 양수여야 합니다")
        return self

    def for_entry(self, entry: SolverEntry, lam: Optional[float] = None) -> "ExperimentConfig":
        """compare 항목 하나에 대한 단일 솔버 설정 (공유 α/λ 는 해당 솔버가 받을 때만 상속)"""
        data = self.model_dump(by_alias=False, exclude={"solvers", "sweep"})
        allowed = SOLVER_FIELDS[entry.solver]
        for name in SOLVER_PARAMS:
            own = getattr(entry, name)
            if own is not None:
                data[name] = own
            elif name not in allowed or name in ("memory_m", "n_cg", "gamma"):
                data[name] = None
        if lam is not None and "lam" in allowed:
            data["lam"] = lam
        data["solver"] = entry.solver
        for name in ("memory_m", "n_cg"):
            if data[name] is None and name in REQUIRED_FIELDS[entry.solver]:
                data[name] = PRESET_SOLVER_DEFAULTS.get(self.preset or "", {}).get(entry.solver, {}).get(name)
        return ExperimentConfig.model_validate(data)

    def echo(self) -> Dict[str, Any]:
        """매니페스트용 JSON 직렬화 (alias 사용)"""
        return self.model_dump(mode="json", by_alias=True, exclude_none=True)


# ================================
# 프리셋
# ================================

PRESETS: Dict[str, Dict[str, Any]] = {
    "denoise": {
        "problem": "denoise2d",
        "alpha": 10.0,
        "lambda": 1.0,
        "budget": 100,
        "grid": {"nx": 64, "ny": 64},
        "noise": {"sigma_rel": 0.15, "mute_fraction": 0.25},
        "sweep": [1.0, 1e2, 1e3, 1e4],
        "solvers": [
            {"solver": "lmccd", "memory_m": 50},
            {"solver": "rcg", "n_cg": 1},
            {"solver": "rcg", "n_cg": 5},
            {"solver": "rcg", "n_cg": 10},
        ],
    },
    "spikes": {
        "problem": "spikes1d",
        "alpha": 1e4,
        "lambda": 0.05,
        "budget": 100,
        "grid": {"n_model": 500, "n_data": 500},
        "kernel": {"depth_D": 0.1, "length_A": 2.0, "scale_c": 1e-2},
        "noise": {"sigma_rel": 0.15, "mute_fraction": 0.2},
        "sweep": [0.05, 0.1, 1.0, 100.0],
        "solvers": [
            {"solver": "lmccd", "memory_m": 100},
            {"solver": "rcg", "n_cg": 1},
            {"solver": "rcg", "n_cg": 5},
            {"solver": "rcg", "n_cg": 10},
            {"solver": "fista"},
        ],
    },
    "pressure": {
        "problem": "pressure2d",
        "alpha": 0.1,
        "lambda": 10.0,
        "budget": 100,
        "grid": {"n_side": 50},
        "kernel": {"depth_D": 0.455, "length_A": 1.2, "scale_c": 5.8515e3},
        "noise": {"sigma_rel": 0.15, "mute_fraction": 0.25},
        "sweep": [5.0, 10.0, 50.0, 100.0],
        "solvers": [
            {"solver": "lmccd", "memory_m": 100},
            {"solver": "rcg", "n_cg": 1},
            {"solver": "rcg", "n_cg": 5},
            {"solver": "rcg", "n_cg": 10},
        ],
    },
}

# 프리셋이 솔버별로 채우는 값 (선택된 솔버에만 적용)
PRESET_SOLVER_DEFAULTS: Dict[str, Dict[str, Dict[str, Any]]] = {
    "denoise": {"lmccd": {"memory_m": 50}, "rcg": {"n_cg": 1}, "scd-mm": {}},
    "spikes": {"lmccd": {"memory_m": 100}, "rcg": {"n_cg": 1}},
    "pressure": {"lmccd": {"memory_m": 100}, "rcg": {"n_cg": 1}},
}

# CLI 플래그 → 설정 필드
CLI_OVERRIDES = {
    "solver": "solver",
    "budget": "budget",
    "lam": "lambda",
    "alpha": "alpha",
    "memory": "memory_m",
    "ncg": "n_cg",
}


def _deep_merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _normalize_aliases(data: Dict[str, Any]) -> Dict[str, Any]:
    """'lam' 으로 들어온 값을 'lambda' 로 통일"""
    if "lam" in data:
        data = dict(data)
        value = data.pop("lam")
        data.setdefault("lambda", value)
    return data


def build_config(raw: Dict[str, Any], overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    프리셋 + 파일 + 오버라이드 병합 후 검증
    프리셋에서 온 값 중 선택된 솔버가 받지 않는 것은 버리고, 사용자가 준 값은 그대로 검증한다
    """
    user = _normalize_aliases(dict(raw))
    for flag, value in (overrides or {}).items():
        if value is None:
            continue
        if flag == "seed":
            user = _deep_merge(user, {"noise": {"seed": value}})
        else:
            user[CLI_OVERRIDES.get(flag, flag)] = value

    preset = user.get("preset")
    merged: Dict[str, Any] = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ValueError(f"알 수 없는 프리셋: {preset}")
        merged = json.loads(json.dumps(PRESETS[preset]))
        solver = user.get("solver")
        if solver is not None:
            merged = _deep_merge(merged, PRESET_SOLVER_DEFAULTS[preset].get(solver, {}))
            allowed = SOLVER_FIELDS.get(solver, set())
            for name, key in (("alpha", "alpha"), ("lam", "lambda"), ("memory_m", "memory_m"), ("n_cg", "n_cg")):
                if name not in allowed:
                    merged.pop(key, None)
        if "solvers" in user:
            merged.pop("solvers", None)
    merged = _deep_merge(merged, user)
    return ExperimentConfig.model_validate(merged)


def load_config(path: Path | str, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """JSON 설정 파일 (또는 실행 매니페스트) 로드"""
    with open(path, "r", encoding="utf-8") as f:
        raw = json.load(f)
    # 매니페스트면 config 에코를 그대로 재사용
    if isinstance(raw, dict) and "config" in raw and "artifacts" in raw:
        raw = raw["config"]
    if not isinstance(raw, dict):
        raise ValueError(f"설정 파일 최상위는 객체여야 합니다: {path}")
    config = build_config(raw, overrides)
    logger.debug(f"📋 설정 로드: {path} | problem={config.problem} | solver={config.solver}")
    return config
