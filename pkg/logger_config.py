"""
CCD 인버전 구조화된 로깅 시스템
"""

import logging
import os
import sys
from datetime import datetime
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

# .env 파일에서 로그 설정 로드
load_dotenv()


class ColorFormatter(logging.Formatter):
    """컬러 출력을 위한 로그 포매터"""

    # ANSI 색상 코드
    COLORS = {
        'DEBUG': '\033[36m',     # 청록색
        'INFO': '\033[32m',      # 녹색
        'WARNING': '\033[33m',   # 노란색
        'ERROR': '\033[31m',     # 빨간색
        'CRITICAL': '\033[35m',  # 마젠타색
        'RESET': '\033[0m'
    }

    def format(self, record: logging.LogRecord) -> str:
        color = self.COLORS.get(record.levelname, self.COLORS['RESET'])
        reset = self.COLORS['RESET']
        return f"{color}{super().format(record)}{reset}"


def _level_from_env(variable: str, default: str = "INFO") -> int:
    """환경 변수에서 로그 레벨 결정 (알 수 없는 이름이면 INFO)"""
    name = os.getenv(variable, default).upper()
    level = logging.getLevelName(name)
    return level if isinstance(level, int) else logging.INFO


class InversionLogger:
    """인버전 솔버 전용 로거 클래스"""

    def __init__(self, name: str = "CCD"):
        self.logger = logging.getLogger(name)
        self.logger.setLevel(logging.DEBUG)

        # 중복 핸들러 방지
        if not self.logger.handlers:
            self._setup_handlers()

    def _setup_handlers(self) -> None:
        """콘솔 + 파일 핸들러 설정"""
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(_level_from_env("CCD_LOG_LEVEL"))
        console_handler.setFormatter(ColorFormatter(
            '%(asctime)s | %(name)s | %(levelname)s | %(message)s',
            datefmt='%H:%M:%S'
        ))
        self.logger.addHandler(console_handler)

        # 파일 핸들러 (디렉토리 생성 실패 시 콘솔만 사용)
        log_dir = Path(os.getenv("CCD_LOG_DIR", "logs"))
        try:
            log_dir.mkdir(parents=True, exist_ok=True)
            file_handler = logging.FileHandler(
                log_dir / f"ccd_{datetime.now().strftime('%Y%m%d')}.log",
                encoding='utf-8'
            )
        except OSError:
            return
        file_handler.setLevel(_level_from_env("CCD_LOG_FILE_LEVEL"))
        file_handler.setFormatter(logging.Formatter(
            '%(asctime)s | %(name)s | %(levelname)s | %(funcName)s:%(lineno)d | %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        ))
        self.logger.addHandler(file_handler)

    def debug(self, message: str, **kwargs) -> None:
        self.logger.debug(message, **kwargs)

    def info(self, message: str, **kwargs) -> None:
        self.logger.info(message, **kwargs)

    def warning(self, message: str, **kwargs) -> None:
        self.logger.warning(message, **kwargs)

    def error(self, message: str, **kwargs) -> None:
        self.logger.error(message, **kwargs)

    def solver_start(self, solver: str, params: Optional[dict] = None) -> None:
        """솔버 시작 로그"""
        param_str = f" | 매개변수: {params}" if params else ""
        self.info(f"🚀 {solver} 솔버 시작{param_str}")

    def solver_end(self, solver: str, status: str, iterations: int,
                   ops_a: int, ops_at: int) -> None:
        """솔버 종료 로그"""
        self.info(f"✅ {solver} 종료 ({status}) | 반복: {iterations} | A: {ops_a} | Aᵀ: {ops_at}")

    def iteration(self, solver: str, k: int, objective: float, rel_change: float) -> None:
        """반복 진단 로그 (DEBUG, 어느 핸들러도 받지 않으면 생략)"""
        if not any(h.level <= logging.DEBUG for h in self.logger.handlers):
            return
        self.debug(f"🔁 {solver} k={k} | 목적함수: {objective:.6e} | 상대변화: {rel_change:.3e}")

    def budget_stop(self, solver: str, used: int, budget: int) -> None:
        """예산 소진 로그"""
        self.info(f"💸 {solver} 예산 소진: {used}/{budget} A/Aᵀ 적용")

    def artifact(self, path: Path | str) -> None:
        """산출물 저장 로그"""
        self.debug(f"💾 저장: {path}")

    def performance(self, operation: str, duration: float, details: str = "") -> None:
        """성능 측정 로그"""
        detail_str = f" | {details}" if details else ""
        self.info(f"⏱️  성능: {operation} | 소요시간: {duration:.2f}초{detail_str}")


# 전역 로거 인스턴스
logger = InversionLogger()


def get_logger(name: str = "CCD") -> InversionLogger:
    """로거 인스턴스 반환"""
    return InversionLogger(name)
