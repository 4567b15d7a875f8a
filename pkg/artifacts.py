"""
실행 산출물 입출력
- convergence.csv: 반복별 진단 (열 순서 고정)
- *.f64: 8바이트 매직 + ndim(u64) + dims(u64 × ndim) + little-endian float64 데이터
- *.pgm: 16비트 흑백 이미지 (최소-최대 스케일, 확인용)
- manifest.json: 재현 정보
"""

import json
from pathlib import Path
from typing import Any, Dict

import numpy as np

from logger_config import get_logger
from state import ConvergenceRecord

logger = get_logger("Artifacts")

F64_MAGIC = b"CCDF64\x00\x01"


class ArtifactFormatError(ValueError):
    """f64 헤더가 잘못되었거나 데이터 길이가 맞지 않을 때"""


def write_convergence_csv(record: ConvergenceRecord, path: Path) -> Path:
    record.to_frame().to_csv(path, index=False, float_format="%.17g", na_rep="nan",
                             lineterminator="\n")
    logger.artifact(path)
    return path


def write_f64(path: Path, array: np.ndarray) -> Path:
    arr = np.ascontiguousarray(array, dtype="<f8")
    header = np.array([arr.ndim, *arr.shape], dtype="<u8")
    with open(path, "wb") as f:
        f.write(F64_MAGIC)
        f.write(header.tobytes())
        f.write(arr.tobytes(order="C"))
    logger.artifact(path)
    return path


def read_f64(path: Path | str) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:8] != F64_MAGIC:
        raise ArtifactFormatError(f"f64 매직 불일치: {path}")
    if len(raw) < 16:
        raise ArtifactFormatError(f"f64 헤더가 잘렸습니다: {path}")
    ndim = int(np.frombuffer(raw, dtype="<u8", count=1, offset=8)[0])
    offset = 16 + 8 * ndim
    if len(raw) < offset:
        raise ArtifactFormatError(f"f64 차원 헤더가 잘렸습니다: {path}")
    dims = tuple(int(v) for v in np.frombuffer(raw, dtype="<u8", count=ndim, offset=16))
    count = int(np.prod(dims)) if dims else 1
    if len(raw) - offset != 8 * count:
        raise ArtifactFormatError(
            f"f64 데이터 길이 불일치: {path} (기대 {8 * count}, 실제 {len(raw) - offset})"
        )
    return np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(dims).astype(np.float64)


def write_pgm(path: Path, grid: np.ndarray) -> Path:
    """16비트 P5 PGM (빅엔디언), 상수 이미지는 0"""
    img = np.asarray(grid, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"PGM 은 2D 격자만 지원합니다: {img.shape}")
    lo, hi = float(img.min()), float(img.max())
    if hi > lo:
        scaled = np.round((img - lo) / (hi - lo) * 65535.0)
    else:
        scaled = np.zeros_like(img)
    height, width = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{width} {height}\n65535\n".encode("ascii"))
        f.write(scaled.astype(">u2").tobytes())
    logger.artifact(path)
    return path


def write_manifest(path: Path, manifest: Dict[str, Any]) -> Path:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")
    logger.artifact(path)
    return path
