"""
Configuration management using Pydantic Settings.
환경 변수를 로드하고 검증하는 프로세스 설정 모듈.

실험 설정(RunConfig, GracConfig)은 app/schemas/run_config.py 에서 관리하며,
여기서는 로깅/출력 경로/재시도 정책처럼 실행 환경에 속하는 값만 다룹니다.
"""
from typing import Optional
from pathlib import Path
from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field, field_validator


class Settings(BaseSettings):
    """
    애플리케이션 설정 클래스
    .env 파일에서 자동으로 환경 변수를 로드합니다.
    """

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )

    # 프로젝트 정보
    PROJECT_TITLE: str = Field(default="GRAC Trainer", description="프로젝트 이름")
    PROJECT_VERSION: str = Field(default="1.0.0", description="프로젝트 버전")

    # 로깅 설정
    LOG_LEVEL: str = Field(default="INFO", description="로그 레벨")
    LOG_FILE: str = Field(default="logs/grac.log", description="로그 파일 경로")
    LOG_FILE_ENABLED: bool = Field(default=True, description="파일 로그 사용 여부")

    # 출력 설정
    OUTPUT_ROOT: str = Field(default="runs", description="실행 결과 기본 디렉토리")

    # 실행 재시도 설정 (일시적 I/O 오류 전용)
    RUN_MAX_RETRIES: int = Field(default=2, ge=1, description="실행 작업 최대 시도 횟수")
    RUN_RETRY_INITIAL_DELAY: float = Field(
        default=0.5,
        ge=0.0,
        description="재시도 초기 대기 시간 (초)"
    )

    # 평가 시드 설정
    EVAL_SEED_OFFSET: int = Field(
        default=1_000_003,
        ge=1,
        description="학습 시드와 구분되는 평가 시드 오프셋"
    )

    @field_validator("LOG_LEVEL")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in valid_levels:
            raise ValueError(f"LOG_LEVEL must be one of {valid_levels}")
        return v.upper()

    @field_validator("LOG_FILE")
    @classmethod
    def create_log_directory(cls, v: str) -> str:
        log_path = Path(v)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        return v


_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """
    설정 인스턴스를 반환합니다 (싱글톤).

    Returns:
        Settings: 설정 객체

    Raises:
        ValueError: 설정 로드 실패 시
    """
    global _settings

    if _settings is None:
        try:
            _settings = Settings()
        except Exception as e:
            raise ValueError(f"Failed to load or validate settings: {str(e)}")

    return _settings


settings = get_settings()
