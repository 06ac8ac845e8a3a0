"""
Logging configuration using Loguru.
Loguru 로깅 설정: 콘솔, 프로세스 로그 파일, 실행(run) 디렉토리별 train.log.
"""
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional, Union

from loguru import logger

from app.core.config import settings

CONSOLE_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"
)
FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} - {message}"
RUN_LOG_NAME = "train.log"


def setup_logging():
    """
    로거를 설정합니다.

    - 콘솔 (stderr, 컬러)
    - LOG_FILE_ENABLED 일 때: 회전 로그 파일 + 발산 진단용 error.log
    """
    logger.remove()
    logger.add(sys.stderr, format=CONSOLE_FORMAT, level=settings.LOG_LEVEL, colorize=True)

    if not settings.LOG_FILE_ENABLED:
        return

    log_file_path = Path(settings.LOG_FILE)
    log_file_path.parent.mkdir(parents=True, exist_ok=True)
    logger.add(
        str(log_file_path),
        format=FILE_FORMAT,
        level=settings.LOG_LEVEL,
        rotation="100 MB",
        retention="30 days",
        compression="zip",
        encoding="utf-8",
    )
    logger.add(
        str(log_file_path.parent / "error.log"),
        format=FILE_FORMAT,
        level="ERROR",
        rotation="50 MB",
        retention="60 days",
        compression="zip",
        encoding="utf-8",
    )


@contextmanager
def run_log(run_dir: Union[str, Path], level: Optional[str] = None) -> Iterator[Path]:
    """
    with 블록 동안 로그를 run 디렉토리의 train.log 에도 남깁니다.

    Args:
        run_dir: 실행 출력 디렉토리 (없으면 생성)
        level: 최소 레벨 (기본 settings.LOG_LEVEL)

    Yields:
        train.log 경로
    """
    path = Path(run_dir) / RUN_LOG_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    sink_id = logger.add(str(path), format=FILE_FORMAT, level=level or settings.LOG_LEVEL, encoding="utf-8")
    try:
        yield path
    finally:
        logger.remove(sink_id)


def get_logger(name: Optional[str] = None):
    if name:
        return logger.bind(name=name)
    return logger


setup_logging()
