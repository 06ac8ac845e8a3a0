"""
Training metrics schemas.
학습 메트릭 스키마.
"""
from typing import List, Optional, Union

from pydantic import BaseModel, Field

METRICS_HEADER: List[str] = [
    "step",
    "eval_return_mean",
    "eval_return_std",
    "q1_mean",
    "q_gap_mean",
    "critic_iters",
    "alpha",
]

DIVERGED = "diverged"


def format_float(value: float) -> str:
    """CSV 출력용 고정 포맷 (바이트 단위 재현성)."""
    return format(float(value), ".10g")


class StepMetrics(BaseModel):
    """
    train_step 한 번의 결과.
    warmup 중에는 updated=False 이고 critic 관련 값은 0 입니다.
    """
    step: int = Field(..., ge=0)
    episode_return: float = Field(..., description="현재 에피소드의 누적 보상 (스케일 전)")
    y1_mean: float = Field(default=0.0, description="배치 평균 y'1")
    gap_mean: float = Field(default=0.0, description="배치 평균 (y'1 - y'2)")
    critic_iters: int = Field(default=0, ge=0)
    alpha: float = 0.0
    critic_loss_first: float = 0.0
    critic_loss_last: float = 0.0
    updated: bool = False


class MetricsRow(BaseModel):
    """
    metrics.csv 의 한 행.
    발산으로 중단된 경우 eval_return_mean 에 'diverged' 가 기록됩니다.
    """
    step: int = Field(..., ge=0)
    eval_return_mean: Union[float, str]
    eval_return_std: float
    q1_mean: float
    q_gap_mean: float
    critic_iters: float
    alpha: float

    def to_csv_fields(self) -> List[str]:
        mean = self.eval_return_mean
        return [
            str(self.step),
            mean if isinstance(mean, str) else format_float(mean),
            format_float(self.eval_return_std),
            format_float(self.q1_mean),
            format_float(self.q_gap_mean),
            format_float(self.critic_iters),
            format_float(self.alpha),
        ]

    @property
    def diverged(self) -> bool:
        return self.eval_return_mean == DIVERGED


class RunSummary(BaseModel):
    """
    학습 실행 한 번의 결과 요약
    """
    run_dir: str
    steps_completed: int = Field(..., ge=0)
    eval_rows: int = Field(default=0, ge=0)
    final_eval_return_mean: Optional[float] = Field(default=None, description="마지막 평가 평균 (평가가 없으면 None)")
    episodes_completed: int = Field(default=0, ge=0)


class EvaluationSummary(BaseModel):
    """
    저장된 정책을 평가한 결과
    """
    run_dir: str
    episodes: int = Field(..., ge=1)
    seed: int
    return_mean: float
    return_std: float
