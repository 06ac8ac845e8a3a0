"""
Data models for tabular verification outcomes.
테이블형 검증 결과 모델.
"""
from enum import Enum
from typing import Dict

from pydantic import BaseModel, Field


class Status(str, Enum):
    """
    개별 검증 항목의 결과.
    """
    PASS = "pass"
    FAIL = "fail"


class CheckStatus(BaseModel):
    """
    검증 항목 하나의 결과를 담는 모델.
    """
    status: Status = Field(..., description="통과 여부")
    message: str = Field(default="", description="요약 메시지")
    metrics: Dict[str, float] = Field(default_factory=dict, description="최악값 등 수치 요약")


class VerificationReport(BaseModel):
    overall: Status
    details: Dict[str, CheckStatus]

    @property
    def passed(self) -> bool:
        return self.overall == Status.PASS
