"""
Defines individual tabular verification checks.
테이블형 검증 항목들을 개별 전략으로 정의합니다.
"""
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from app.core.logging import get_logger
from app.schemas.verification import CheckStatus, Status
from app.services.tabular_verify import (
    ImprovementMode,
    maxmin_double_q_run,
    policy_improvement_check,
    random_mdp,
    random_policy,
    value_iteration,
)

logger = get_logger(__name__)


@dataclass(frozen=True)
class SuiteSettings:
    """
    검증 스위트 파라미터. 기본값은 5 상태, 3 행동, gamma 0.9, 보상 잡음 0.1 입니다.
    """
    n_seeds: int = 20
    samples: int = 500_000
    n_states: int = 5
    n_actions: int = 3
    gamma: float = 0.9
    reward_noise_std: float = 0.1
    lr_exponent: float = 1.0
    count_scale: Optional[float] = None  # None 이면 1 - gamma
    convergence_threshold: float = 0.05
    agreement_threshold: float = 0.02
    policy_pairs: int = 100
    policy_states: int = 4
    base_seed: int = 0

    @property
    def effective_count_scale(self) -> float:
        return 1.0 - self.gamma if self.count_scale is None else self.count_scale


@dataclass(frozen=True)
class SeedResult:
    seed: int
    q2_error: float
    q1_q2_gap: float
    elapsed: float


def run_maxmin_suite(suite: SuiteSettings) -> List[SeedResult]:
    """시드별로 무작위 MDP 를 만들고 max-min 업데이트를 돌려 Q* 와 비교합니다."""
    results = []
    for k in range(suite.n_seeds):
        seed = suite.base_seed + k
        start = time.time()
        rng = np.random.default_rng(seed)
        mdp = random_mdp(suite.n_states, suite.n_actions, suite.gamma, suite.reward_noise_std, rng)
        q_star = value_iteration(mdp, tol=1e-12).values
        q1, q2 = maxmin_double_q_run(
            mdp,
            suite.samples,
            suite.lr_exponent,
            rng,
            count_scale=suite.effective_count_scale,
        )
        result = SeedResult(
            seed=seed,
            q2_error=float(np.max(np.abs(q2.values - q_star))),
            q1_q2_gap=float(np.max(np.abs(q1.values - q2.values))),
            elapsed=time.time() - start,
        )
        logger.debug(f"seed {seed}: |Q2-Q*|={result.q2_error:.5f} |Q1-Q2|={result.q1_q2_gap:.2e}")
        results.append(result)
    return results


class VerificationCheck(ABC):
    """
    모든 검증 항목이 구현해야 하는 추상 베이스 클래스(인터페이스).
    """
    name: str = ""

    @abstractmethod
    def check(self) -> CheckStatus:
        """
        검증을 수행하고 CheckStatus 를 반환합니다.
        """
        pass


class ConvergenceCheck(VerificationCheck):
    """모든 시드에서 ||Q2 - Q*||_inf < threshold."""
    name = "maxmin_convergence"

    def __init__(self, results: List[SeedResult], threshold: float):
        self.results = results
        self.threshold = threshold

    def check(self) -> CheckStatus:
        worst = max((r.q2_error for r in self.results), default=0.0)
        failing = [r.seed for r in self.results if not r.q2_error < self.threshold]
        status = Status.FAIL if failing or not self.results else Status.PASS
        return CheckStatus(
            status=status,
            message=f"worst |Q2-Q*|={worst:.5f} over {len(self.results)} seeds (threshold {self.threshold})"
            + (f"; failing seeds {failing}" if failing else ""),
            metrics={"worst": worst, "failing": float(len(failing))},
        )


class AgreementCheck(VerificationCheck):
    """모든 시드에서 ||Q1 - Q2||_inf < threshold."""
    name = "q1_q2_agreement"

    def __init__(self, results: List[SeedResult], threshold: float):
        self.results = results
        self.threshold = threshold

    def check(self) -> CheckStatus:
        worst = max((r.q1_q2_gap for r in self.results), default=0.0)
        ok = bool(self.results) and worst < self.threshold
        return CheckStatus(
            status=Status.PASS if ok else Status.FAIL,
            message=f"worst |Q1-Q2|={worst:.3e} (threshold {self.threshold})",
            metrics={"worst": worst},
        )


class ContractionCheck(VerificationCheck):
    """value iteration 잔차가 단조 감소하는지."""
    name = "value_iteration_contraction"

    def __init__(self, suite: SuiteSettings):
        self.suite = suite

    def check(self) -> CheckStatus:
        violations = 0
        for k in range(self.suite.n_seeds):
            rng = np.random.default_rng(self.suite.base_seed + k)
            mdp = random_mdp(self.suite.n_states, self.suite.n_actions, self.suite.gamma, 0.0, rng)
            history: List[float] = []
            value_iteration(mdp, tol=1e-10, history=history)
            violations += sum(1 for a, b in zip(history, history[1:]) if b > a)
        return CheckStatus(
            status=Status.PASS if violations == 0 else Status.FAIL,
            message=f"{violations} non-decreasing residual steps",
            metrics={"violations": float(violations)},
        )


class PolicyImprovementCheck(VerificationCheck):
    """무작위 (MDP, 정책) 쌍에서 개선된 정책이 기존 정책을 지배하는지."""

    def __init__(self, suite: SuiteSettings, mode: ImprovementMode):
        self.suite = suite
        self.mode = ImprovementMode(mode)
        self.name = f"policy_improvement_{self.mode.value}"

    def check(self) -> CheckStatus:
        failures = 0
        for k in range(self.suite.policy_pairs):
            rng = np.random.default_rng(10_000 + self.suite.base_seed + k)
            mdp = random_mdp(self.suite.policy_states, self.suite.n_actions, self.suite.gamma, 0.0, rng)
            policy = random_policy(mdp.n_states, mdp.n_actions, rng)
            _, dominated = policy_improvement_check(mdp, policy, self.mode)
            failures += 0 if dominated else 1
        return CheckStatus(
            status=Status.PASS if failures == 0 else Status.FAIL,
            message=f"{self.suite.policy_pairs - failures}/{self.suite.policy_pairs} pairs dominated",
            metrics={"failures": float(failures)},
        )
