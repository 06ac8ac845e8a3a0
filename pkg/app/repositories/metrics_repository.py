"""
Metrics Repository for append-only CSV files.
append-only 메트릭 CSV 접근을 위한 Repository 계층.
"""
import csv
import io
import math
import os
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from app.core.exceptions import GracError
from app.core.logging import get_logger
from app.schemas.metrics import METRICS_HEADER, MetricsRow

logger = get_logger(__name__)


class MetricsRepository:
    """
    metrics.csv 에 행을 추가하는 Repository 클래스.
    매 행마다 flush + fsync 하므로 중간에 프로세스가 죽어도 기록된 행은 남습니다.
    """

    def __init__(self, path: Union[str, Path]):
        self._path = Path(path)
        self._last_step: Optional[int] = None
        logger.debug(f"MetricsRepository initialized for {self._path}")

    @property
    def path(self) -> Path:
        return self._path

    def initialize(self, append: bool = False, resume_step: Optional[int] = None) -> None:
        """
        헤더를 씁니다. append=True 이고 파일이 이미 있으면 기존 행을 유지하고 마지막 step 을 이어받습니다.
        resume_step 이 주어지면 그보다 뒤의 행(체크포인트 이후에 기록된 행)은 지웁니다.
        """
        self._path.parent.mkdir(parents=True, exist_ok=True)
        if append and self._path.exists():
            header, rows = load_table(self._path)
            if header != METRICS_HEADER:
                raise GracError(f"Existing metrics file has an unexpected header: {header}")
            if resume_step is not None:
                kept = [row for row in rows if int(row["step"]) <= resume_step]
                if len(kept) < len(rows):
                    logger.warning(f"Dropping {len(rows) - len(kept)} metrics rows recorded after step {resume_step}")
                    buffer = io.StringIO()
                    writer = csv.writer(buffer, lineterminator="\n")
                    writer.writerow(METRICS_HEADER)
                    writer.writerows([row[column] for column in METRICS_HEADER] for row in kept)
                    self._write(buffer.getvalue(), mode="w")
                rows = kept
            self._last_step = int(rows[-1]["step"]) if rows else None
            logger.info(f"Appending to existing metrics file ({len(rows)} rows)")
            return
        self._write(",".join(METRICS_HEADER) + "\n", mode="w")
        self._last_step = None

    def append(self, row: MetricsRow) -> None:
        """
        행 하나를 추가합니다.

        Raises:
            GracError: step 이 이전 행보다 크지 않을 때
        """
        if self._last_step is not None and row.step <= self._last_step:
            raise GracError(
                f"Metrics rows must be strictly step-ordered ({row.step} after {self._last_step})",
                context={"step": row.step, "last_step": self._last_step},
            )
        buffer = io.StringIO()
        csv.writer(buffer, lineterminator="\n").writerow(row.to_csv_fields())
        self._write(buffer.getvalue(), mode="a")
        self._last_step = row.step

    def _write(self, text: str, mode: str) -> None:
        with open(self._path, mode, encoding="utf-8", newline="") as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())


def load_table(path: Union[str, Path]) -> Tuple[List[str], List[Dict[str, str]]]:
    """
    CSV 파일을 (헤더, 행 딕셔너리 목록) 으로 읽습니다.
    """
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        rows = list(reader)
        header = list(reader.fieldnames or [])
    return header, rows


def parse_number(value: Optional[str]) -> Optional[float]:
    """숫자가 아니거나 유한하지 않은 셀은 None."""
    if value is None:
        return None
    try:
        number = float(value)
    except ValueError:
        return None
    return number if math.isfinite(number) else None
