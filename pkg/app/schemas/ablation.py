"""
Ablation suite result schemas.
ablation 실행 결과 스키마.
"""
from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class VariantSummary(BaseModel):
    """
    변형 하나의 요약 (여러 시드 평균)
    """
    variant: str
    seeds: List[int] = Field(default_factory=list)
    final_return_mean: Optional[float] = Field(
        default=None,
        description="시드별 마지막 10회 평가 평균의 평균 (실패 시 None)",
    )
    normalized: Optional[float] = Field(
        default=None, description="GRAC 대비 상대 성능 1 + (R - R_grac) / |R_grac| (return 이 클수록 큼)"
    )
    q1_abs_max: Optional[float] = Field(default=None, description="시드 전체에서 |q1_mean| 최댓값")
    q_gap_abs_mean: Optional[float] = Field(default=None, description="|q_gap_mean| 시간 평균")
    failed_seeds: List[int] = Field(default_factory=list)


class AblationSummary(BaseModel):
    """
    ablation 전체 결과 스키마
    """
    total: int = Field(..., ge=0, description="전체 (변형, 시드) 실행 수")
    success: int = Field(..., ge=0)
    failed: int = Field(..., ge=0)
    failed_runs: List[str] = Field(default_factory=list, description="'variant/seed_k' 목록")
    processing_time: str = Field(..., description="총 처리 시간 (예: '192.4s')")
    variants: Dict[str, VariantSummary] = Field(default_factory=dict)

    @property
    def success_rate(self) -> float:
        """성공률 계산 (0.0~1.0)"""
        if self.total == 0:
            return 0.0
        return self.success / self.total
