"""
Fixed-capacity replay buffer with uniform sampling.
고정 용량 링 버퍼와 균등 복원 샘플링.
"""
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from app.core.exceptions import EmptyBufferError, GracError, NonFiniteError
from app.core.logging import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class Transition:
    """
    (s, a, r, s', done) 한 개.
    r 은 reward_scale 이 이미 곱해진 값이고, done 은 진짜 종료일 때만 True 입니다.
    """
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool


@dataclass(frozen=True)
class TransitionBatch:
    """배치 단위 전이. 모든 배열의 첫 축이 배치 축입니다."""
    s: np.ndarray        # [N, S]
    a: np.ndarray        # [N, A]
    r: np.ndarray        # [N]
    s_next: np.ndarray   # [N, S]
    done: np.ndarray     # [N] float (0.0 / 1.0)

    def __len__(self) -> int:
        return self.r.shape[0]


class ReplayBuffer:
    """
    FIFO 로 덮어쓰는 링 버퍼.
    저장 공간은 필요한 만큼 두 배씩 늘리다가 capacity 에서 멈춥니다.
    """

    _INITIAL_ROWS = 1024

    def __init__(self, capacity: int, state_dim: int, action_dim: int, max_action: Optional[float] = None):
        if capacity < 1:
            raise GracError("ReplayBuffer capacity must be >= 1")
        self.capacity = int(capacity)
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.max_action = max_action
        self.write_index = 0
        self.size = 0

        rows = min(self.capacity, self._INITIAL_ROWS)
        self._s = np.zeros((rows, state_dim))
        self._a = np.zeros((rows, action_dim))
        self._r = np.zeros(rows)
        self._s_next = np.zeros((rows, state_dim))
        self._done = np.zeros(rows)

    def __len__(self) -> int:
        return self.size

    def push(self, t: Transition) -> None:
        """
        전이 하나를 저장합니다. 가득 차면 가장 오래된 항목을 덮어씁니다.

        Raises:
            NonFiniteError: NaN/Inf 가 포함된 경우
            GracError: 행동이 박스 밖이거나 차원이 맞지 않을 때
        """
        s = np.asarray(t.s, dtype=np.float64).reshape(-1)
        a = np.asarray(t.a, dtype=np.float64).reshape(-1)
        s_next = np.asarray(t.s_next, dtype=np.float64).reshape(-1)
        if s.shape[0] != self.state_dim or s_next.shape[0] != self.state_dim or a.shape[0] != self.action_dim:
            raise GracError(
                "Transition dimensions do not match the buffer",
                context={"s": s.shape, "a": a.shape, "s_next": s_next.shape},
            )
        for field_name, value in (("s", s), ("a", a), ("s_next", s_next), ("r", np.array([t.r]))):
            if not np.all(np.isfinite(value)):
                raise NonFiniteError(f"Transition field '{field_name}' is not finite", context={"field": field_name})
        if self.max_action is not None and np.any(np.abs(a) > self.max_action + 1e-12):
            raise GracError("Transition action outside the action box", context={"a": a.tolist()})

        if self.write_index >= self._r.shape[0]:
            self._grow()
        i = self.write_index
        self._s[i] = s
        self._a[i] = a
        self._r[i] = t.r
        self._s_next[i] = s_next
        self._done[i] = 1.0 if t.done else 0.0

        self.write_index = (self.write_index + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, n: int, rng: np.random.Generator) -> TransitionBatch:
        """
        현재 내용에서 n 개를 균등 복원 추출합니다.

        Raises:
            EmptyBufferError: 버퍼가 비어 있을 때
        """
        if self.size == 0:
            raise EmptyBufferError("Cannot sample from an empty replay buffer")
        if n < 1:
            raise GracError("Sample size must be >= 1")
        idx = rng.integers(0, self.size, size=n)
        return TransitionBatch(
            s=self._s[idx].copy(),
            a=self._a[idx].copy(),
            r=self._r[idx].copy(),
            s_next=self._s_next[idx].copy(),
            done=self._done[idx].copy(),
        )

    def contents(self) -> List[Transition]:
        """가장 오래된 것부터 현재 저장된 전이 목록."""
        start = self.write_index if self.size == self.capacity else 0
        order = [(start + k) % self.capacity for k in range(self.size)]
        return [
            Transition(
                s=self._s[i].copy(),
                a=self._a[i].copy(),
                r=float(self._r[i]),
                s_next=self._s_next[i].copy(),
                done=bool(self._done[i]),
            )
            for i in order
        ]

    def _grow(self) -> None:
        rows = min(self.capacity, self._r.shape[0] * 2)
        extra = rows - self._r.shape[0]
        self._s = np.concatenate([self._s, np.zeros((extra, self.state_dim))])
        self._a = np.concatenate([self._a, np.zeros((extra, self.action_dim))])
        self._r = np.concatenate([self._r, np.zeros(extra)])
        self._s_next = np.concatenate([self._s_next, np.zeros((extra, self.state_dim))])
        self._done = np.concatenate([self._done, np.zeros(extra)])
        logger.debug(f"ReplayBuffer storage grown to {rows} rows")
