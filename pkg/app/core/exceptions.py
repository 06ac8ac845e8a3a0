"""
Typed exceptions raised by the numerical and storage layers.
수치 계산/저장 계층에서 발생시키는 예외 정의.

서비스 계층은 이 예외들을 잡아서 app.core.result 의 Err 로 변환합니다.
"""
from typing import Optional


class GracError(Exception):
    """
    모든 도메인 예외의 베이스 클래스.

    Attributes:
        context: 디버깅용 추가 정보 (shape, 파라미터 이름 등)
    """

    def __init__(self, message: str, context: Optional[dict] = None):
        super().__init__(message)
        self.context = context or {}


class ShapeMismatchError(GracError):
    """두 텐서의 shape 가 연산과 호환되지 않을 때."""

    def __init__(self, op: str, left: tuple, right: tuple):
        super().__init__(
            f"{op}: incompatible shapes {left} and {right}",
            context={"op": op, "left": left, "right": right},
        )


class DomainError(GracError):
    """정의역 밖의 입력 (예: 0 이하 값의 log)."""


class NonScalarLossError(GracError):
    """backward 를 스칼라가 아닌 텐서에서 호출했을 때."""


class NonFiniteError(GracError):
    """NaN/Inf 가 감지되었을 때. context 에 파라미터 이름이나 행동을 담습니다."""


class DivergenceError(NonFiniteError):
    """학습 중 손실이 유한하지 않게 된 경우 (실행 중단 대상)."""


class EmptyBufferError(GracError):
    """비어 있는 리플레이 버퍼에서 샘플링을 시도했을 때."""


class EpisodeFinishedError(GracError):
    """종료된 에피소드에서 step 을 호출했을 때."""


class ConfigParseError(GracError):
    """설정 파일/CLI 오버라이드 파싱 실패."""


class MissingColumnError(GracError):
    """CSV 에 요청한 컬럼이 없을 때."""

    def __init__(self, missing: list, available: list):
        super().__init__(
            f"Missing column(s) {missing}; available columns: {available}",
            context={"missing": missing, "available": available},
        )
