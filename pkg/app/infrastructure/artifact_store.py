"""
Run artifact store.
실행 결과(설정 스냅샷, 메트릭 CSV, 체크포인트)를 run 디렉토리 아래에서 관리합니다.
"""
import os
from pathlib import Path
from typing import Optional, Union

from app.core.config import settings
from app.core.logging import get_logger

logger = get_logger(__name__)

CONFIG_SNAPSHOT = "config.txt"
METRICS_CSV = "metrics.csv"
CHECKPOINT_DIR = "checkpoints"
FINAL_CHECKPOINT = "final.ckpt"


class ArtifactStore:
    """
    하나의 run 디렉토리에 대한 파일 시스템 작업을 담당하는 클래스.
    모든 경로는 run 디렉토리 하위로 제한됩니다.
    """

    def __init__(self, run_dir: Optional[Union[str, Path]] = None):
        """
        Args:
            run_dir: run 디렉토리 (기본값: settings.OUTPUT_ROOT)
        """
        self._base_path = Path(run_dir or settings.OUTPUT_ROOT)
        self._base_path.mkdir(parents=True, exist_ok=True)
        logger.debug(f"ArtifactStore initialized with base path: {self._base_path}")

    @property
    def base_path(self) -> Path:
        return self._base_path

    @property
    def metrics_path(self) -> Path:
        return self.resolve(METRICS_CSV)

    @property
    def config_path(self) -> Path:
        return self.resolve(CONFIG_SNAPSHOT)

    def checkpoint_path(self, step: Optional[int] = None) -> Path:
        """step 이 없으면 최종 체크포인트 경로를 반환합니다."""
        name = FINAL_CHECKPOINT if step is None else f"step_{step:08d}.ckpt"
        return self.resolve(f"{CHECKPOINT_DIR}/{name}")

    def latest_checkpoint(self) -> Optional[Path]:
        """가장 큰 step 의 주기 체크포인트 (없으면 None). final.ckpt 는 제외합니다."""
        directory = self.resolve(CHECKPOINT_DIR)
        if not directory.is_dir():
            return None
        periodic = sorted(directory.glob("step_*.ckpt"))
        return periodic[-1] if periodic else None

    def write_text(self, relative_path: str, content: str) -> Path:
        """
        텍스트 파일을 쓰고 fsync 합니다.

        Raises:
            PermissionError: run 디렉토리 밖을 가리킬 때
        """
        path = self.resolve(relative_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(content)
            f.flush()
            os.fsync(f.fileno())
        logger.debug(f"Wrote {len(content)} chars to {path.name}")
        return path

    def read_text(self, relative_path: str) -> str:
        path = self.resolve(relative_path)
        try:
            return path.read_text(encoding="utf-8")
        except FileNotFoundError:
            logger.error(f"Artifact not found: {path}")
            raise

    def exists(self, relative_path: str) -> bool:
        try:
            return self.resolve(relative_path).is_file()
        except PermissionError:
            return False

    def subdirectory(self, relative_path: str) -> "ArtifactStore":
        """하위 run 디렉토리용 스토어 (예: ablation 의 variant/seed 디렉토리)."""
        return ArtifactStore(self.resolve(relative_path))

    def resolve(self, relative_path: Union[str, Path]) -> Path:
        """
        경로를 검증하고 절대 경로로 변환합니다.
        Path Traversal 방지를 위해 run 디렉토리 하위만 허용합니다.

        Raises:
            PermissionError: 보안 위반 시
        """
        candidate = Path(relative_path)
        full_path = candidate if candidate.is_absolute() else self._base_path / candidate
        resolved = full_path.resolve()
        try:
            resolved.relative_to(self._base_path.resolve())
        except ValueError:
            logger.error(f"Security violation: path outside run directory: {relative_path}")
            raise PermissionError(f"Access denied: path must be within {self._base_path}")
        return resolved
