"""
Shared pytest fixtures.
공용 pytest 픽스처.
"""
import os

# app 을 import 하기 전에 파일 로그를 끕니다
os.environ.setdefault("LOG_FILE_ENABLED", "false")
os.environ.setdefault("LOG_LEVEL", "WARNING")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from app.repositories.replay_buffer import Transition, TransitionBatch  # noqa: E402
from app.schemas.run_config import CemConfig, GracConfig  # noqa: E402
from app.services import networks as nets  # noqa: E402


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def small_cfg() -> GracConfig:
    """작은 네트워크와 작은 CEM 으로 빠르게 도는 설정."""
    return GracConfig(
        batch_size=4,
        hidden_dim=8,
        K=5,
        warmup_steps=0,
        cem=CemConfig(n_pop=16, n_elite=3, n_iter=2),
        cem_loss_weight=1.0,
    )


@pytest.fixture
def toy_batch(rng) -> TransitionBatch:
    """state_dim=3, action_dim=2, 4 행짜리 배치."""
    n, state_dim, action_dim = 4, 3, 2
    return TransitionBatch(
        s=rng.standard_normal((n, state_dim)),
        a=rng.uniform(-0.9, 0.9, size=(n, action_dim)),
        r=rng.standard_normal(n),
        s_next=rng.standard_normal((n, state_dim)),
        done=np.array([0.0, 1.0, 0.0, 0.0]),
    )


@pytest.fixture
def small_actor(rng) -> nets.Params:
    return nets.init_actor(3, 2, rng, hidden_dim=8)


@pytest.fixture
def small_critics(rng):
    return nets.init_critic_pair(3, 2, rng, hidden_dim=8)


def make_transition(i: float, state_dim: int = 3, action_dim: int = 2) -> Transition:
    return Transition(
        s=np.full(state_dim, float(i)),
        a=np.full(action_dim, 0.1),
        r=float(i),
        s_next=np.full(state_dim, float(i) + 1.0),
        done=False,
    )
