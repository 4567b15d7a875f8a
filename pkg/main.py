"""
CCD 역문제 실험 메인 실행 파일
사용법: python main.py {run,compare,cond} <config.json> [옵션]
"""

import argparse
import json
import os
import sys
import time
from pathlib import Path
from typing import List, Optional

# 현재 디렉토리를 Python 경로에 추가
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import numpy as np
from pydantic import ValidationError

from config import load_config
from krylov import RankDeficiencyError
from logger_config import get_logger
from utils import (compare_solvers, print_banner, print_condition,
                   print_system_info, run_experiment)

# 로거 인스턴스 생성
logger = get_logger("Main")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID_CONFIG = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", type=Path, help="실험 설정 JSON (또는 manifest.json)")
    common.add_argument("--out", type=Path, default=Path("runs"), help="산출물 디렉토리")
    common.add_argument("--seed", type=int, help="잡음 시드 (u64)")
    common.add_argument("--budget", type=int, help="A/Aᵀ 적용 합계 상한")
    common.add_argument("--solver", help="솔버 이름")
    common.add_argument("--lambda", dest="lam", type=float, help="벌점 가중치 λ")
    common.add_argument("--alpha", type=float, help="데이터 적합 가중치 α")
    common.add_argument("--memory", type=int, help="제한 메모리 크기 m")
    common.add_argument("--ncg", type=int, help="RCG 내부 CGNE 반복 수 N_c")
    common.add_argument("--jobs", type=int, default=1, help="compare 동시 실행 수")
    common.add_argument("--quiet", action="store_true", help="배너 출력 생략")

    parser = argparse.ArgumentParser(prog="ccd", description="압축 켤레 방향 L1/TV 역문제 실험")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="단일 솔버 실행")
    sub.add_parser("compare", parents=[common], help="여러 솔버 비교")
    sub.add_parser("cond", parents=[common], help="내부 최소제곱 조건수 출력")
    return parser


def _format_validation_error(error: ValidationError) -> str:
    lines = []
    for item in error.errors():
        loc = ".".join(str(part) for part in item.get("loc", ())) or "config"
        lines.append(f"  • {loc}: {item.get('msg')}")
    return "\n".join(lines)


def main(argv: Optional[List[str]] = None) -> int:
    """메인 실행 함수, 종료 코드 반환"""
    args = build_parser().parse_args(argv)
    if not args.quiet:
        print_banner()
        print_system_info()

    overrides = {
        "seed": args.seed, "budget": args.budget, "solver": args.solver, "lam": args.lam,
        "alpha": args.alpha, "memory": args.memory, "ncg": args.ncg,
    }
    start = time.time()
    try:
        config = load_config(args.config, overrides)
        logger.info(f"🚀 {args.command} 시작: {args.config}")
        if args.command == "run":
            run_experiment(config, args.out)
        elif args.command == "compare":
            compare_solvers(config, args.out, jobs=args.jobs)
        else:
            print_condition(config)
    except ValidationError as e:
        logger.error(f"설정 검증 실패:\n{_format_validation_error(e)}")
        print(f"❌ 잘못된 설정:\n{_format_validation_error(e)}", file=sys.stderr)
        return EXIT_INVALID_CONFIG
    except (RankDeficiencyError, np.linalg.LinAlgError) as e:
        logger.error(f"수치 오류: {e}")
        print(f"❌ 솔버 오류: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, json.JSONDecodeError, FileNotFoundError) as e:
        logger.error(f"설정 오류: {e}")
        print(f"❌ 잘못된 설정: {e}", file=sys.stderr)
        return EXIT_INVALID_CONFIG
    except Exception as e:
        logger.error(f"실행 중 오류: {e}")
        print(f"❌ 오류 발생: {e}", file=sys.stderr)
        return EXIT_FAILURE

    logger.performance(args.command, time.time() - start)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
