"""
Desk-scale continuous-control environments.
책상 규모의 연속 제어 환경 (quadratic-bandit, double-integrator, pendulum).

모든 환경은 같은 reset/step 인터페이스를 따르고, 보상은 비용에 음수를 붙인 값이라
항상 0 이하입니다. done 은 진짜 종료, truncated 는 시간 제한 도달을 의미합니다.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Dict, NamedTuple, Optional

import numpy as np

from app.core.exceptions import EpisodeFinishedError, GracError
from app.core.logging import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class EnvSpec:
    """
    환경의 정적 메타데이터.

    Attributes:
        name: 레지스트리 키
        state_dim, action_dim: 관측/행동 차원
        max_action: 행동 박스 [-max_action, max_action]
        max_episode_steps: 에피소드 길이 (시간 제한)
        max_step_cost: 한 스텝 비용의 상한 (발산 임계값 계산용)
    """
    name: str
    state_dim: int
    action_dim: int
    max_action: float
    max_episode_steps: int
    max_step_cost: float

    def __post_init__(self):
        if self.state_dim < 1 or self.action_dim < 1:
            raise GracError(f"EnvSpec '{self.name}': dimensions must be >= 1")
        if self.max_action <= 0:
            raise GracError(f"EnvSpec '{self.name}': max_action must be > 0")

    @property
    def max_abs_return(self) -> float:
        """한 에피소드에서 가능한 |return| 의 상한."""
        return self.max_step_cost * self.max_episode_steps


@dataclass
class EnvState:
    """물리 상태 벡터, 경과 스텝, 에피소드 rng."""
    physical: np.ndarray
    steps_elapsed: int = 0
    finished: bool = False
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))


class StepResult(NamedTuple):
    observation: np.ndarray
    reward: float
    done: bool
    truncated: bool


class Environment(ABC):
    """
    모든 환경이 구현하는 추상 베이스 클래스.
    하위 클래스는 _initial_state, _observe, _transition 만 정의합니다.
    """

    spec: EnvSpec

    def __init__(self):
        self._state: Optional[EnvState] = None

    def reset(self, seed: int) -> np.ndarray:
        """
        시드로부터 초기 상태를 결정적으로 샘플링합니다.

        Returns:
            np.ndarray: 초기 관측 (shape [state_dim])
        """
        rng = np.random.default_rng(seed)
        self._state = EnvState(physical=self._initial_state(rng), rng=rng)
        return self._observe(self._state.physical)

    def step(self, action: np.ndarray) -> StepResult:
        """
        행동을 적용하고 한 스텝 진행합니다. 박스 밖 행동은 잘라냅니다.

        Raises:
            EpisodeFinishedError: reset 전이거나 이미 끝난 에피소드일 때
        """
        state = self._state
        if state is None or state.finished:
            raise EpisodeFinishedError(
                f"{self.spec.name}: step() called on a finished episode; call reset() first",
                context={"env": self.spec.name},
            )
        a = np.clip(
            np.asarray(action, dtype=np.float64).reshape(self.spec.action_dim),
            -self.spec.max_action,
            self.spec.max_action,
        )
        next_physical, reward, done = self._transition(state.physical, a)
        state.physical = next_physical
        state.steps_elapsed += 1
        truncated = (not done) and state.steps_elapsed >= self.spec.max_episode_steps
        state.finished = done or truncated
        return StepResult(self._observe(next_physical), float(reward), bool(done), bool(truncated))

    @property
    def state(self) -> Optional[EnvState]:
        return self._state

    def set_physical_state(self, physical: np.ndarray) -> np.ndarray:
        """테스트/분석용: 현재 에피소드의 물리 상태를 직접 지정합니다."""
        if self._state is None:
            self.reset(0)
        self._state.physical = np.asarray(physical, dtype=np.float64).copy()
        self._state.finished = False
        return self._observe(self._state.physical)

    @abstractmethod
    def _initial_state(self, rng: np.random.Generator) -> np.ndarray:
        pass

    @abstractmethod
    def _observe(self, physical: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def _transition(self, physical: np.ndarray, action: np.ndarray) -> tuple[np.ndarray, float, bool]:
        pass


def wrap_angle(theta: float) -> float:
    """[-pi, pi) 로 감습니다."""
    return ((theta + math.pi) % (2.0 * math.pi)) - math.pi


class QuadraticBandit(Environment):
    """1스텝 에피소드, reward = -(a - 0.3)^2."""

    OPTIMUM = 0.3
    spec = EnvSpec(
        name="quadratic-bandit",
        state_dim=1,
        action_dim=1,
        max_action=1.0,
        max_episode_steps=1,
        max_step_cost=(1.0 + 0.3) ** 2,
    )

    def _initial_state(self, rng: np.random.Generator) -> np.ndarray:
        return np.zeros(1)

    def _observe(self, physical: np.ndarray) -> np.ndarray:
        return physical.copy()

    def _transition(self, physical, action):
        reward = -float((action[0] - self.OPTIMUM) ** 2)
        return physical.copy(), reward, False


class DoubleIntegrator(Environment):
    """x' = x + v dt, v' = clip(v + a dt, ±2). 상태 = (x, v)."""

    DT = 0.05
    V_MAX = 2.0
    spec = EnvSpec(
        name="double-integrator",
        state_dim=2,
        action_dim=1,
        max_action=1.0,
        max_episode_steps=200,
        # |x| <= 1 + V_MAX * DT * 200
        max_step_cost=(1.0 + 2.0 * 0.05 * 200) ** 2 + 0.1 * 2.0 ** 2 + 0.001,
    )

    def _initial_state(self, rng: np.random.Generator) -> np.ndarray:
        return np.array([rng.uniform(-1.0, 1.0), 0.0])

    def _observe(self, physical: np.ndarray) -> np.ndarray:
        return physical.copy()

    def _transition(self, physical, action):
        x, v = physical
        a = action[0]
        cost = x * x + 0.1 * v * v + 0.001 * a * a
        x_next = x + v * self.DT
        v_next = float(np.clip(v + a * self.DT, -self.V_MAX, self.V_MAX))
        return np.array([x_next, v_next]), -cost, False


class Pendulum(Environment):
    """
    스윙업 진자. theta=0 이 위쪽(불안정 평형점)입니다.
    관측 = (cos theta, sin theta, theta_dot), 비용은 스텝 시작 상태 기준.
    """

    G = 10.0
    M = 1.0
    L = 1.0
    DT = 0.05
    MAX_SPEED = 8.0
    MAX_TORQUE = 2.0
    spec = EnvSpec(
        name="pendulum",
        state_dim=3,
        action_dim=1,
        max_action=2.0,
        max_episode_steps=200,
        max_step_cost=math.pi ** 2 + 0.1 * 8.0 ** 2 + 0.001 * 2.0 ** 2,
    )

    def _initial_state(self, rng: np.random.Generator) -> np.ndarray:
        return np.array([rng.uniform(-math.pi, math.pi), rng.uniform(-1.0, 1.0)])

    def _observe(self, physical: np.ndarray) -> np.ndarray:
        theta, theta_dot = physical
        return np.array([math.cos(theta), math.sin(theta), theta_dot])

    def _transition(self, physical, action):
        theta, theta_dot = physical
        u = float(np.clip(action[0], -self.MAX_TORQUE, self.MAX_TORQUE))
        cost = wrap_angle(theta) ** 2 + 0.1 * theta_dot ** 2 + 0.001 * u ** 2

        # semi-implicit Euler
        accel = 3.0 * self.G / (2.0 * self.L) * math.sin(theta) + 3.0 / (self.M * self.L ** 2) * u
        theta_dot_next = float(np.clip(theta_dot + accel * self.DT, -self.MAX_SPEED, self.MAX_SPEED))
        theta_next = theta + theta_dot_next * self.DT
        return np.array([theta_next, theta_dot_next]), -cost, False


ENV_REGISTRY: Dict[str, Callable[[], Environment]] = {
    QuadraticBandit.spec.name: QuadraticBandit,
    DoubleIntegrator.spec.name: DoubleIntegrator,
    Pendulum.spec.name: Pendulum,
}


def make_env(name: str) -> Environment:
    """
    이름으로 환경을 생성합니다.

    Raises:
        GracError: 등록되지 않은 이름일 때 (사용 가능한 이름 목록 포함)
    """
    factory = ENV_REGISTRY.get(name)
    if factory is None:
        raise GracError(
            f"Unknown environment '{name}'. Available: {sorted(ENV_REGISTRY)}",
            context={"name": name, "available": sorted(ENV_REGISTRY)},
        )
    return factory()


def get_env_spec(name: str) -> EnvSpec:
    return make_env(name).spec
