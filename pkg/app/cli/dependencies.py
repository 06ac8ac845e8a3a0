"""
Dependency factories for the command-line layer.
CLI 계층의 의존성 생성 관리.
"""
from functools import lru_cache
from typing import Optional

from app.core.logging import get_logger
from app.infrastructure.artifact_store import ArtifactStore
from app.services.ablation_service import AblationService
from app.services.run_executor import RunExecutor
from app.services.run_service import RunService
from app.services.verification_aggregator import VerificationAggregator
from app.services.verification_checks import SuiteSettings

logger = get_logger(__name__)


@lru_cache()
def get_run_executor() -> RunExecutor:
    """RunExecutor 싱글톤 반환"""
    return RunExecutor()


@lru_cache()
def get_run_service() -> RunService:
    return RunService(executor=get_run_executor())


@lru_cache()
def get_ablation_service() -> AblationService:
    return AblationService(executor=get_run_executor())


def get_verification_aggregator(suite: SuiteSettings, output_dir: Optional[str] = None) -> VerificationAggregator:
    """호출마다 설정이 다르므로 캐시하지 않습니다."""
    store = ArtifactStore(output_dir) if output_dir else None
    logger.debug("Creating VerificationAggregator instance.")
    return VerificationAggregator(suite=suite, store=store)
