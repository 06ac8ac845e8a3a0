"""
Retry policy for runs that fail on transient I/O.
디스크 쓰기 실패 같은 일시적 오류에만 실행을 다시 시도하는 실행기.
"""
import time
from typing import Any, Callable, Dict, Optional

from app.core.config import settings
from app.core.logging import get_logger
from app.core.result import Err, Ok, Result, SystemError

logger = get_logger(__name__)

# 실패한 시도의 Err 와 직전 인자를 받아 다음 시도의 인자를 돌려줍니다
RetryPlanner = Callable[[Err, Dict[str, Any]], Dict[str, Any]]


class RunExecutor:
    """
    Result 를 돌려주는 작업을 실행하고, 재시도 가능한 Err 일 때만 지수 백오프로 다시 부릅니다.

    학습처럼 긴 작업은 plan_retry 로 다음 시도를 마지막 체크포인트에서 이어가도록 인자를 바꿉니다.
    발산/설정/데이터 오류는 같은 입력이면 같은 결과이므로 곧바로 반환합니다.
    """

    def __init__(self, max_retries: Optional[int] = None, initial_delay: Optional[float] = None):
        """
        Args:
            max_retries: 최대 시도 횟수 (기본값: settings.RUN_MAX_RETRIES)
            initial_delay: 첫 재시도 전 대기 시간 (초)
        """
        self._attempts = max(1, max_retries if max_retries is not None else settings.RUN_MAX_RETRIES)
        self._initial_delay = initial_delay if initial_delay is not None else settings.RUN_RETRY_INITIAL_DELAY

    def run(
        self,
        task: Callable[..., Result],
        plan_retry: Optional[RetryPlanner] = None,
        label: Optional[str] = None,
        **kwargs,
    ) -> Result:
        """
        Args:
            task: Result 를 반환하는 함수
            plan_retry: 재시도 직전에 task 인자를 바꾸는 함수 (없으면 같은 인자로 재실행)
            label: 로그에 쓸 작업 이름 (기본값: task 이름)
            **kwargs: task 인자

        Returns:
            성공 결과, 재시도 불가능한 첫 실패, 또는 마지막 시도의 실패
        """
        name = label or getattr(task, "__name__", "task")
        for attempt in range(1, self._attempts + 1):
            try:
                result = task(**kwargs)
            except Exception as e:
                logger.error(f"✗ {name}: unexpected {type(e).__name__}: {e}", exc_info=True)
                return Err(SystemError(error=e, context={"task": name}))

            match result:
                case Ok():
                    if attempt > 1:
                        logger.info(f"✓ {name} recovered on attempt {attempt}/{self._attempts}")
                    return result
                case Err() if result.is_retryable and attempt < self._attempts:
                    backoff = self._initial_delay * 2 ** (attempt - 1)
                    logger.warning(
                        f"{name}: transient failure on attempt {attempt}/{self._attempts} "
                        f"({result.error_message}); next attempt in {backoff:.1f}s"
                    )
                    time.sleep(backoff)
                    if plan_retry is not None:
                        kwargs = plan_retry(result, dict(kwargs))
                case Err():
                    if result.is_retryable:
                        logger.error(f"✗ {name}: still failing after {self._attempts} attempts ({result.error_message})")
                    return result
        raise AssertionError("unreachable: the last attempt always returns")
