"""
공통 픽스처
"""

import os
import sys
import tempfile

# 테스트 로그는 임시 디렉토리로
os.environ.setdefault("CCD_LOG_DIR", tempfile.mkdtemp(prefix="ccd-logs-"))
os.environ.setdefault("CCD_LOG_LEVEL", "WARNING")

# 프로젝트 루트를 Python 경로에 추가
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from operators import dense_operator, diff1d


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture(scope="module")
def tv_instance():
    """N=30, M=40, B=diff1d 랜덤 완전 계수 문제 (α=1, λ=1)"""
    gen = np.random.default_rng(7)
    n, m = 30, 40
    matrix = gen.standard_normal((m, n))
    u_true = np.repeat([0.0, 1.0, -0.5], n // 3)
    d = matrix @ u_true + 0.05 * gen.standard_normal(m)
    return {
        "a_op": dense_operator(matrix),
        "b_op": diff1d(n),
        "d": d,
        "u_true": u_true,
        "alpha": 1.0,
        "lam": 1.0,
    }


@pytest.fixture(scope="module")
def fast_admm_instance():
    """N=30, M=40, B=diff1d 결정적 밀집 문제 (α=1, λ=30), 정확한 ADMM 이 300회 안에 반올림 수준까지 수렴"""
    n, m = 30, 40
    rows = np.arange(1, m + 1)[:, None]
    matrix = np.sin(1.3 * rows * np.arange(1, n + 1) + 0.5 * (rows - 1))
    u_true = np.repeat([0.0, 1.0, -0.5], n // 3)
    d = matrix @ u_true + 0.05 * np.sin(2.3 * np.arange(m) + 0.4)
    return {
        "a_op": dense_operator(matrix),
        "b_op": diff1d(n),
        "d": d,
        "u_true": u_true,
        "alpha": 1.0,
        "lam": 30.0,
    }
