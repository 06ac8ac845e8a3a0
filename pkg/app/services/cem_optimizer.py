"""
Cross-entropy method search over a box-bounded action space.
행동 박스 위에서 Q 를 최대화하는 CEM 탐색 (배치 단위).

q_fn 은 (B, n_pop, A) 후보를 받아 (B, n_pop) 점수를 돌려주는 벡터화 함수입니다.
배치의 각 행은 독립적인 가우시안 제안분포와 독립 난수로 탐색합니다.
"""
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from app.core.exceptions import GracError, NonFiniteError
from app.core.logging import get_logger
from app.schemas.run_config import CemConfig

logger = get_logger(__name__)

BatchQFn = Callable[[np.ndarray], np.ndarray]
QFn = Callable[[np.ndarray], np.ndarray]


@dataclass
class CemState:
    """
    한 번의 탐색(행 하나 또는 배치 전체)의 현재 상태.

    Attributes:
        mean, sigma: 대각 가우시안 제안분포 ([..., A])
        population: 마지막 세대 표본 ([..., n_pop, A])
        scores: 마지막 세대 점수 ([..., n_pop])
    """
    mean: np.ndarray
    sigma: np.ndarray
    population: np.ndarray
    scores: np.ndarray


def _elite_order(scores: np.ndarray, n_elite: int) -> np.ndarray:
    """점수 내림차순 안정 정렬 후 상위 n_elite 인덱스 (동점이면 앞 인덱스 우선)."""
    return np.argsort(-scores, axis=-1, kind="stable")[..., :n_elite]


def elite_refit(
    population: np.ndarray, scores: np.ndarray, n_elite: int, sigma_floor: float = 1e-6
) -> Tuple[np.ndarray, np.ndarray]:
    """
    상위 n_elite 표본의 평균과 (모집단 정규화) 표준편차.

    Args:
        population: [n_pop, A] 또는 [B, n_pop, A]
        scores: [n_pop] 또는 [B, n_pop]

    Returns:
        (mean, sigma): sigma 는 sigma_floor 이상
    """
    if population.shape[-2] == 0:
        raise GracError("elite_refit requires a non-empty population")
    if n_elite < 1 or n_elite > population.shape[-2]:
        raise GracError(f"n_elite must be in [1, {population.shape[-2]}], got {n_elite}")
    order = _elite_order(scores, n_elite)
    elites = np.take_along_axis(population, order[..., None], axis=-2)
    mean = elites.mean(axis=-2)
    sigma = np.maximum(elites.std(axis=-2), sigma_floor)
    return mean, sigma


def _check_scores(scores: np.ndarray, population: np.ndarray) -> None:
    if np.all(np.isfinite(scores)):
        return
    bad = np.argwhere(~np.isfinite(scores))[0]
    action = population[tuple(bad)]
    raise NonFiniteError(
        f"CEM received a non-finite score for action {action.tolist()}",
        context={"action": action.tolist(), "score": float(scores[tuple(bad)])},
    )


def cem_search_batch(
    q_fn: BatchQFn,
    init_mean: np.ndarray,
    init_sigma: np.ndarray,
    cfg: CemConfig,
    rng: np.random.Generator,
    max_action: float = 1.0,
) -> Tuple[np.ndarray, np.ndarray, CemState]:
    """
    배치 CEM 탐색.

    Args:
        q_fn: (B, n_pop, A) -> (B, n_pop)
        init_mean, init_sigma: [B, A] 제안분포 초기값 (sigma > 0)
        cfg: CemConfig
        rng: 난수 생성기
        max_action: 행동 박스 반경

    Returns:
        (best_action [B, A], best_score [B], 마지막 CemState)

    Raises:
        NonFiniteError: 점수에 NaN/Inf 가 있을 때 (해당 행동을 context 에 담음)
    """
    mean = np.asarray(init_mean, dtype=np.float64)
    sigma = np.asarray(init_sigma, dtype=np.float64)
    if mean.ndim != 2 or mean.shape != sigma.shape:
        raise GracError("init_mean and init_sigma must both have shape [B, A]")
    if np.any(sigma <= 0):
        raise GracError("init_sigma must be strictly positive")

    batch_size, action_dim = mean.shape
    rows = np.arange(batch_size)
    best_action: Optional[np.ndarray] = None
    best_score: Optional[np.ndarray] = None
    population = scores = None

    for iteration in range(cfg.n_iter):
        noise = rng.standard_normal((batch_size, cfg.n_pop, action_dim))
        population = np.clip(mean[:, None, :] + sigma[:, None, :] * noise, -max_action, max_action)
        scores = np.asarray(q_fn(population), dtype=np.float64).reshape(batch_size, cfg.n_pop)
        _check_scores(scores, population)

        order = _elite_order(scores, cfg.n_elite)
        top = order[:, 0]
        top_action = population[rows, top]
        top_score = scores[rows, top]

        if best_action is None or not cfg.track_running_best:
            best_action, best_score = top_action.copy(), top_score.copy()
        else:
            improved = top_score > best_score
            best_action[improved] = top_action[improved]
            best_score[improved] = top_score[improved]

        mean, sigma = elite_refit(population, scores, cfg.n_elite, cfg.sigma_floor)
        logger.trace(f"CEM iteration {iteration + 1}/{cfg.n_iter}: best={float(best_score.max()):.6g}")

    state = CemState(mean=mean, sigma=sigma, population=population, scores=scores)
    return best_action, best_score, state


def cem_search(
    q_fn: QFn,
    init_mean: np.ndarray,
    init_sigma: np.ndarray,
    cfg: CemConfig,
    rng: np.random.Generator,
    max_action: float = 1.0,
) -> np.ndarray:
    """
    단일 탐색 버전.

    Args:
        q_fn: (n_pop, A) 후보 -> (n_pop,) 점수
        init_mean, init_sigma: [A]

    Returns:
        best_action [A]
    """
    mean = np.asarray(init_mean, dtype=np.float64).reshape(1, -1)
    sigma = np.asarray(init_sigma, dtype=np.float64).reshape(1, -1)
    best, _, _ = cem_search_batch(
        lambda pop: np.asarray(q_fn(pop[0]), dtype=np.float64)[None, :],
        mean,
        sigma,
        cfg,
        rng,
        max_action,
    )
    return best[0]
