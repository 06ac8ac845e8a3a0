"""
Result pattern for run outcomes and CLI exit codes.
학습/평가/ablation 실행 결과를 Ok / Err 로 돌려주고, 실패 종류를 종료 코드로 매핑합니다.
"""
from dataclasses import dataclass
from typing import Any, ClassVar, Dict, Generic, Optional, TypeVar, Union

T = TypeVar("T")

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_DIVERGENCE = 2


@dataclass(frozen=True)
class Ok(Generic[T]):
    value: T


class ErrorType:
    """
    실패 종류의 기반 클래스.

    하위 클래스는 클래스 속성만 바꿔 재시도 정책과 종료 코드를 정합니다.

    Attributes:
        error: 원인 예외
        context: 진단용 부가 정보 (step, run_dir 등)
    """

    RETRYABLE: ClassVar[bool] = False
    RETRY_DELAY: ClassVar[float] = 0.0
    EXIT_CODE: ClassVar[int] = EXIT_CONFIG_ERROR

    def __init__(self, error: Exception, context: Optional[Dict[str, Any]] = None):
        self.error = error
        self.context = dict(context or {})

    def is_retryable(self) -> bool:
        return self.RETRYABLE

    def retry_delay(self) -> float:
        return self.RETRY_DELAY

    def exit_code(self) -> int:
        return self.EXIT_CODE

    @property
    def error_message(self) -> str:
        return str(self.error)

    def __str__(self) -> str:
        suffix = f" {self.context}" if self.context else ""
        return f"{type(self).__name__}: {self.error_message}{suffix}"


class ConfigurationError(ErrorType):
    """알 수 없는 키, 타입 불일치, 설정 불변식 위반."""


class InvalidDataError(ErrorType):
    """없는 CSV 컬럼, 손상된 체크포인트, 없는 run 디렉토리."""


class DivergenceFailure(ErrorType):
    """손실이나 그래디언트가 유한하지 않음. 같은 시드면 같은 결과라 재시도하지 않습니다."""

    EXIT_CODE = EXIT_DIVERGENCE


class SystemError(ErrorType):
    """디스크 쓰기 실패 같은 일시적 I/O 오류."""

    RETRYABLE = True
    RETRY_DELAY = 1.0


@dataclass(frozen=True)
class Err:
    error_type: ErrorType

    @property
    def is_retryable(self) -> bool:
        return self.error_type.is_retryable()

    @property
    def retry_delay(self) -> float:
        return self.error_type.retry_delay()

    @property
    def exit_code(self) -> int:
        return self.error_type.exit_code()

    @property
    def error_message(self) -> str:
        return self.error_type.error_message

    @property
    def context(self) -> Dict[str, Any]:
        return self.error_type.context


Result = Union[Ok[T], Err]
