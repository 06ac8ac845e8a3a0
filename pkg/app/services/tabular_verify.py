"""
Finite-MDP oracles for the max-min double Q update and policy improvement.
유한 MDP 위에서 max-min double Q 업데이트와 정책 개선 성질을 정확한 DP 오라클로 검증합니다.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from app.core.exceptions import GracError
from app.core.logging import get_logger

logger = get_logger(__name__)

POLICY_EVAL_TOL = 1e-10
DOMINANCE_TOL = 1e-8
DETERMINISTIC_MASS = 1.0 - 1e-6


@dataclass
class TabularMdp:
    """
    유한 MDP (P, R, gamma).

    Attributes:
        P: 전이 확률 [S, A, S]
        R: 평균 보상 [S, A]
        gamma: 할인율 [0, 1)
        reward_noise_std: 샘플 보상에 더해지는 가우시안 잡음 표준편차
    """
    P: np.ndarray
    R: np.ndarray
    gamma: float
    reward_noise_std: float = 0.0

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=np.float64)
        self.R = np.asarray(self.R, dtype=np.float64)
        if self.P.ndim != 3 or self.P.shape[:2] != self.R.shape or self.P.shape[0] != self.P.shape[2]:
            raise GracError(f"Inconsistent MDP shapes P={self.P.shape}, R={self.R.shape}")
        if not np.allclose(self.P.sum(axis=2), 1.0, rtol=0.0, atol=1e-12):
            raise GracError("Each transition row P[s, a] must sum to 1")
        if not 0.0 <= self.gamma < 1.0:
            raise GracError("gamma must be in [0, 1)")

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def n_actions(self) -> int:
        return self.P.shape[1]


@dataclass
class QTable:
    values: np.ndarray
    counts: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.counts is None:
            self.counts = np.zeros(self.values.shape, dtype=np.int64)


class ImprovementMode(str, Enum):
    Q_LOSS = "q_loss"
    CEM = "cem"


def random_mdp(
    n_states: int,
    n_actions: int,
    gamma: float,
    reward_noise_std: float,
    rng: np.random.Generator,
) -> TabularMdp:
    """Dirichlet(1) 전이 행, U[0, 1) 평균 보상."""
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    P /= P.sum(axis=2, keepdims=True)
    R = rng.random((n_states, n_actions))
    return TabularMdp(P=P, R=R, gamma=gamma, reward_noise_std=reward_noise_std)


def bellman_optimality(mdp: TabularMdp, q: np.ndarray) -> np.ndarray:
    return mdp.R + mdp.gamma * mdp.P @ q.max(axis=1)


def value_iteration(
    mdp: TabularMdp,
    tol: float = 1e-10,
    max_iterations: int = 1_000_000,
    history: Optional[List[float]] = None,
) -> QTable:
    """
    Bellman 최적 연산자를 고정점까지 반복합니다.

    Args:
        history: 주어지면 매 반복의 잔차 ||TQ - Q||_inf 를 추가합니다

    Returns:
        QTable: ||TQ* - Q*||_inf < tol 을 만족하는 Q*
    """
    if tol <= 0:
        raise GracError("tol must be positive")
    q = np.zeros_like(mdp.R)
    for _ in range(max_iterations):
        q_next = bellman_optimality(mdp, q)
        residual = float(np.max(np.abs(q_next - q)))
        if history is not None:
            history.append(residual)
        q = q_next
        if residual < tol:
            break
    return QTable(values=q)


def _argmax_lowest(row: List[float]) -> int:
    # max() 는 동점일 때 첫 원소를 반환합니다
    return max(range(len(row)), key=row.__getitem__)


def maxmin_double_q_run(
    mdp: TabularMdp,
    steps: int,
    lr_exponent: float,
    rng: np.random.Generator,
    count_scale: float = 1.0,
    init_scale: float = 1.0,
) -> Tuple[QTable, QTable]:
    """
    두 Q 테이블을 같은 max-min 타깃으로 갱신합니다.

    y = r + gamma * max(min_i Q_i(s', a_pi), min_i Q_i(s', a_star))
    a_pi 는 s' 에서 균등 추출, a_star 는 Q2(s', .) 의 argmax (동점이면 낮은 인덱스).
    스텝 크기 alpha = 1 / (1 + count_scale * n)^lr_exponent, n 은 이번 방문을 포함한 방문 횟수.

    (s, a) 는 매 스텝 균등 추출되고 s' ~ P(s, a) 입니다.
    """
    if not 0.5 < lr_exponent <= 1.0:
        raise GracError("lr_exponent must be in (0.5, 1]")
    n_states, n_actions = mdp.n_states, mdp.n_actions

    # 난수는 미리 벡터로 뽑고, 순차 의존성이 있는 갱신만 파이썬 루프로 돕니다
    s_idx = rng.integers(0, n_states, size=steps)
    a_idx = rng.integers(0, n_actions, size=steps)
    cumulative = np.cumsum(mdp.P, axis=2)
    u = rng.random(steps)
    s_next_idx = np.minimum((u[:, None] >= cumulative[s_idx, a_idx]).sum(axis=1), n_states - 1)
    rewards = mdp.R[s_idx, a_idx] + mdp.reward_noise_std * rng.standard_normal(steps)
    a_pi_idx = rng.integers(0, n_actions, size=steps)

    q1 = (init_scale * rng.random((n_states, n_actions))).tolist()
    q2 = (init_scale * rng.random((n_states, n_actions))).tolist()
    counts = [[0] * n_actions for _ in range(n_states)]
    alphas = (1.0 / (1.0 + count_scale * np.arange(steps + 1)) ** lr_exponent).tolist()
    gamma = mdp.gamma

    for s, a, s_next, r, a_pi in zip(
        s_idx.tolist(), a_idx.tolist(), s_next_idx.tolist(), rewards.tolist(), a_pi_idx.tolist()
    ):
        q1_next, q2_next = q1[s_next], q2[s_next]
        a_star = _argmax_lowest(q2_next)
        m_pi = min(q1_next[a_pi], q2_next[a_pi])
        m_star = min(q1_next[a_star], q2_next[a_star])
        y = r + gamma * max(m_pi, m_star)

        n = counts[s][a] + 1
        counts[s][a] = n
        alpha = alphas[n]
        q1[s][a] += alpha * (y - q1[s][a])
        q2[s][a] += alpha * (y - q2[s][a])

    counts_arr = np.array(counts, dtype=np.int64)
    return QTable(np.array(q1), counts_arr.copy()), QTable(np.array(q2), counts_arr)


def exact_policy_evaluation(mdp: TabularMdp, policy: np.ndarray, tol: float = POLICY_EVAL_TOL) -> QTable:
    """
    Q^pi = R + gamma * P * (sum_a pi(a|s') Q^pi(s', a)) 를 반복으로 풉니다.
    """
    policy = np.asarray(policy, dtype=np.float64)
    if policy.shape != mdp.R.shape or not np.allclose(policy.sum(axis=1), 1.0, atol=1e-9):
        raise GracError("policy must be a row-stochastic [S, A] matrix")
    q = np.zeros_like(mdp.R)
    while True:
        q_next = mdp.R + mdp.gamma * mdp.P @ np.sum(policy * q, axis=1)
        residual = float(np.max(np.abs(q_next - q)))
        q = q_next
        if residual < tol:
            return QTable(values=q)


def greedy_policy(q: np.ndarray) -> np.ndarray:
    """argmax (낮은 인덱스 우선) 에 질량 1 을 두는 결정적 정책."""
    policy = np.zeros_like(q)
    policy[np.arange(q.shape[0]), np.argmax(q, axis=1)] = 1.0
    return policy


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cem_concentrate(policy: np.ndarray, q: np.ndarray, lr: float = 1.0, max_updates: int = 10_000) -> np.ndarray:
    """
    a_star(s) = argmax_a Q^pi(s, a) 의 log 확률을 올리는 갱신을 반복합니다.
    개선 가중치 w_s = Q(s, a_star) - E_pi[Q(s, .)] 가 양수인 상태만 갱신하고,
    모든 상태에서 argmax 집합의 질량이 1 - 1e-6 이상이 되면 멈춥니다.
    """
    logits = np.log(np.maximum(policy, 1e-300))
    rows = np.arange(q.shape[0])
    a_star = np.argmax(q, axis=1)
    argmax_set = np.isclose(q, q.max(axis=1, keepdims=True), rtol=0.0, atol=1e-12)
    current = _softmax(logits)
    for _ in range(max_updates):
        weight = q[rows, a_star] - np.sum(current * q, axis=1)
        mass = np.sum(current * argmax_set, axis=1)
        active = (weight > 0) & (mass < DETERMINISTIC_MASS)
        if not np.any(active):
            break
        logits[rows[active], a_star[active]] += lr
        current = _softmax(logits)
    return current


def policy_improvement_check(
    mdp: TabularMdp, policy: np.ndarray, mode: ImprovementMode
) -> Tuple[np.ndarray, bool]:
    """
    Returns:
        (new_policy, dominated): dominated 는 Q^{new} >= Q^{old} - 1e-8 이 모든 (s, a) 에서 성립하는지
    """
    q_old = exact_policy_evaluation(mdp, policy).values
    if ImprovementMode(mode) == ImprovementMode.Q_LOSS:
        new_policy = greedy_policy(q_old)
    else:
        new_policy = cem_concentrate(policy, q_old)
    q_new = exact_policy_evaluation(mdp, new_policy).values
    dominated = bool(np.all(q_new >= q_old - DOMINANCE_TOL))
    return new_policy, dominated


def random_policy(n_states: int, n_actions: int, rng: np.random.Generator) -> np.ndarray:
    return rng.dirichlet(np.ones(n_actions), size=n_states)
