"""
Adam optimizer over named parameter dictionaries.
이름 붙은 파라미터 딕셔너리에 대한 Adam 옵티마이저.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from app.core.exceptions import NonFiniteError, ShapeMismatchError

Params = Dict[str, np.ndarray]

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8


@dataclass
class AdamState:
    """
    파라미터별 1차/2차 모멘트와 스텝 카운터.

    Attributes:
        m: 1차 모멘트 (파라미터와 같은 shape)
        v: 2차 모멘트
        t: 지금까지 수행한 step 수
    """
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Params) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            t=0,
        )


def adam_step(params: Params, grads: Params, state: AdamState, lr: float) -> tuple[Params, AdamState]:
    """
    Adam 업데이트 한 번을 수행합니다. 입력 배열은 수정하지 않습니다.

    Args:
        params: 파라미터 이름 -> 배열
        grads: 같은 키/shape 의 그래디언트
        state: 이전 AdamState
        lr: 학습률 (> 0)

    Returns:
        (새 파라미터, 새 AdamState)

    Raises:
        NonFiniteError: 그래디언트에 NaN/Inf 가 있으면 (context 에 파라미터 이름)
        ShapeMismatchError: 그래디언트 shape 가 파라미터와 다르면
    """
    if lr <= 0:
        raise ValueError("lr must be positive")

    for name, param in params.items():
        grad = grads[name]
        if grad.shape != param.shape:
            raise ShapeMismatchError(f"adam_step[{name}]", param.shape, grad.shape)
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(
                f"Non-finite gradient for parameter '{name}'",
                context={"parameter": name},
            )

    t = state.t + 1
    bc1 = 1.0 - BETA1 ** t
    bc2 = 1.0 - BETA2 ** t

    new_params: Params = {}
    new_m: Params = {}
    new_v: Params = {}
    for name, param in params.items():
        g = grads[name]
        m = BETA1 * state.m.get(name, np.zeros_like(param)) + (1.0 - BETA1) * g
        v = BETA2 * state.v.get(name, np.zeros_like(param)) + (1.0 - BETA2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_params[name] = param - lr * m_hat / (np.sqrt(v_hat) + EPSILON)
        new_m[name] = m
        new_v[name] = v

    return new_params, AdamState(m=new_m, v=new_v, t=t)


class AdamOptimizer:
    """
    파라미터 딕셔너리 하나와 그 AdamState 를 묶어 들고 다니는 얇은 래퍼.
    트레이너는 critic 두 개와 actor 에 각각 하나씩 둡니다.
    """

    def __init__(self, params: Params, lr: float):
        self.params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
        self.lr = lr
        self.state = AdamState.zeros_like(self.params)

    def step(self, grads: Params) -> None:
        self.params, self.state = adam_step(self.params, grads, self.state, self.lr)
