"""
Experiment configuration schemas.
실험 설정 스키마 (CemConfig, GracConfig, RunConfig).
"""
from typing import Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from app.core.config import settings


class CemConfig(BaseModel):
    """
    CEM 탐색 설정
    """
    n_pop: int = Field(default=256, ge=1, description="세대당 표본 수 (N_pop)")
    n_elite: int = Field(default=5, ge=1, description="엘리트 수 (N_elite)")
    n_iter: int = Field(default=2, ge=1, description="반복 횟수 (N_cem)")
    sigma_floor: float = Field(default=1e-6, gt=0.0, description="표준편차 하한")
    track_running_best: bool = Field(
        default=True,
        description="False 면 마지막 반복의 최고 엘리트만 반환",
    )

    @model_validator(mode="after")
    def check_elite_count(self) -> "CemConfig":
        if self.n_elite > self.n_pop:
            raise ValueError(f"n_elite ({self.n_elite}) must be <= n_pop ({self.n_pop})")
        return self


class GracConfig(BaseModel):
    """
    GRAC 알고리즘 하이퍼파라미터와 ablation 플래그
    """
    gamma: float = Field(default=0.99, gt=0.0, le=1.0, description="할인율")
    batch_size: int = Field(default=256, ge=1)
    lr_critic: float = Field(default=3e-4, gt=0.0)
    lr_actor: float = Field(default=2e-4, gt=0.0)
    K: int = Field(default=20, ge=1, description="critic 내부 루프 최대 반복")
    alpha_start: float = Field(default=0.7, gt=0.0, lt=1.0)
    alpha_end: float = Field(default=0.85, gt=0.0, lt=1.0)
    cem: CemConfig = Field(default_factory=CemConfig)
    cem_loss_weight: Optional[float] = Field(
        default=None,
        ge=0.0,
        description="None 이면 1.0 / action_dim 으로 결정",
    )
    reward_scale: float = Field(default=1.0, gt=0.0)
    warmup_steps: int = Field(default=1000, ge=0)
    buffer_size: int = Field(default=1_000_000, ge=1)
    hidden_dim: int = Field(default=256, ge=1, description="MLP 은닉층 폭")

    # ablation 플래그
    use_target_regularization: bool = True
    use_maxmin: bool = True
    use_cem_loss: bool = True
    use_q_loss: bool = True
    use_target_network: bool = False
    target_network_tau: float = Field(default=0.005, gt=0.0, le=1.0)
    use_min_q_actor: bool = False
    use_double_q: bool = True


class RunConfig(BaseModel):
    """
    한 번의 학습 실행 설정
    """
    env: str = Field(default="pendulum", description="환경 레지스트리 키")
    total_steps: int = Field(default=100_000, ge=0)
    eval_interval: int = Field(default=1000, ge=1)
    eval_episodes: int = Field(default=10, ge=1)
    seed: int = Field(default=0, ge=0)
    grac: GracConfig = Field(default_factory=GracConfig)
    output_dir: str = Field(default=settings.OUTPUT_ROOT)
    resume_from: Optional[str] = Field(default=None, description="이어서 학습할 체크포인트")
    checkpoint_interval: int = Field(default=0, ge=0, description="0 이면 최종 체크포인트만")

    @field_validator("env")
    @classmethod
    def validate_env(cls, v: str) -> str:
        from app.infrastructure.envs import ENV_REGISTRY

        if v not in ENV_REGISTRY:
            raise ValueError(f"env must be one of {sorted(ENV_REGISTRY)}")
        return v

    @model_validator(mode="after")
    def check_eval_interval(self) -> "RunConfig":
        if self.total_steps > 0 and self.eval_interval > self.total_steps:
            raise ValueError(
                f"eval_interval ({self.eval_interval}) must be <= total_steps ({self.total_steps})"
            )
        return self

    @property
    def cem_loss_weight(self) -> float:
        if self.grac.cem_loss_weight is None:
            raise ValueError("cem_loss_weight has not been resolved for the environment")
        return self.grac.cem_loss_weight
