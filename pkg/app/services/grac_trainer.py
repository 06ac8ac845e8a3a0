"""
GRAC training step: max-min targets, self-regularized critic loop, CEM-guided actor.
GRAC 학습 단계: max-min 타깃, 자기 정규화 critic 내부 루프, CEM 보조 actor 업데이트.

함수 대부분은 순수 함수이고 파라미터 딕셔너리를 받아 새 딕셔너리를 돌려줍니다.
가변 상태는 GracAgent(파라미터 + Adam 상태)와 TrainingWorld(환경 + 버퍼)에만 있습니다.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from app.core.exceptions import DivergenceError, NonFiniteError
from app.core.logging import get_logger
from app.infrastructure import autodiff as ad
from app.infrastructure.autodiff import ComputationGraph, Tensor
from app.infrastructure.envs import Environment, EnvSpec
from app.infrastructure.optim import AdamState, Params, adam_step
from app.repositories.replay_buffer import ReplayBuffer, Transition, TransitionBatch
from app.schemas.metrics import StepMetrics
from app.schemas.run_config import CemConfig, GracConfig
from app.services import networks as nets
from app.services.cem_optimizer import cem_search_batch

logger = get_logger(__name__)

CriticFn = Callable[[Tensor, Tensor], Tensor]


class ActionMode(str, Enum):
    """행동 선택 모드."""
    TRAIN = "train"
    EVAL = "eval"
    RANDOM = "random"


@dataclass
class TargetBundle:
    """
    critic 내부 루프 동안 고정되는 타깃 값들 (모두 그래디언트와 분리됨).

    Attributes:
        y: TD 타깃 [B]
        a_dagger: 바깥 max 를 달성한 후보 행동 [B, A]
        y1_prime, y2_prime: Q(s', a_dagger; theta_j) [B]
    """
    y: np.ndarray
    a_dagger: np.ndarray
    y1_prime: np.ndarray
    y2_prime: np.ndarray


@dataclass
class CriticPair:
    """두 개의 독립 critic 파라미터와 각자의 Adam 상태."""
    theta1: Params
    theta2: Params
    state1: AdamState = field(default_factory=AdamState)
    state2: AdamState = field(default_factory=AdamState)

    def step(self, grads1: Params, grads2: Params, lr: float) -> None:
        try:
            self.theta1, self.state1 = adam_step(self.theta1, grads1, self.state1, lr)
            self.theta2, self.state2 = adam_step(self.theta2, grads2, self.state2, lr)
        except NonFiniteError as e:
            raise DivergenceError(f"Critic update diverged: {e}", context=e.context) from e


@dataclass
class CriticLoopResult:
    iterations: int
    loss_first: float
    loss_last: float


@dataclass
class GracAgent:
    """
    actor 파라미터 phi, twin critic, 그리고 (ablation 용) 선택적 타깃 네트워크.
    """
    phi: Params
    actor_state: AdamState
    critics: CriticPair
    max_action: float
    target_phi: Optional[Params] = None
    target_theta1: Optional[Params] = None
    target_theta2: Optional[Params] = None

    @classmethod
    def create(cls, spec: EnvSpec, cfg: GracConfig, rng: np.random.Generator) -> "GracAgent":
        phi = nets.init_actor(spec.state_dim, spec.action_dim, rng, cfg.hidden_dim)
        theta1, theta2 = nets.init_critic_pair(spec.state_dim, spec.action_dim, rng, cfg.hidden_dim)
        agent = cls(
            phi=phi,
            actor_state=AdamState.zeros_like(phi),
            critics=CriticPair(theta1, theta2, AdamState.zeros_like(theta1), AdamState.zeros_like(theta2)),
            max_action=spec.max_action,
        )
        if cfg.use_target_network:
            agent.target_phi = nets.copy_params(phi)
            agent.target_theta1 = nets.copy_params(theta1)
            agent.target_theta2 = nets.copy_params(theta2)
        return agent

    def to_arrays(self) -> Dict[str, np.ndarray]:
        """체크포인트용 평탄화. Adam 모멘트와 스텝 카운터를 포함합니다."""
        arrays: Dict[str, np.ndarray] = {}
        arrays.update(nets.flatten_params(self.phi, "actor"))
        arrays.update(nets.flatten_params(self.critics.theta1, "critic1"))
        arrays.update(nets.flatten_params(self.critics.theta2, "critic2"))
        for prefix, state in (
            ("actor", self.actor_state),
            ("critic1", self.critics.state1),
            ("critic2", self.critics.state2),
        ):
            arrays.update(nets.flatten_params(state.m, f"adam_m/{prefix}"))
            arrays.update(nets.flatten_params(state.v, f"adam_v/{prefix}"))
            arrays[f"meta/adam_t/{prefix}"] = np.array([float(state.t)])
        for prefix, params in (
            ("target_actor", self.target_phi),
            ("target_critic1", self.target_theta1),
            ("target_critic2", self.target_theta2),
        ):
            if params is not None:
                arrays.update(nets.flatten_params(params, prefix))
        arrays["meta/max_action"] = np.array([self.max_action])
        return arrays

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray]) -> "GracAgent":
        def adam(prefix: str) -> AdamState:
            return AdamState(
                m=nets.unflatten_params(arrays, f"adam_m/{prefix}") or {},
                v=nets.unflatten_params(arrays, f"adam_v/{prefix}") or {},
                t=int(arrays[f"meta/adam_t/{prefix}"][0]),
            )

        return cls(
            phi=nets.unflatten_params(arrays, "actor"),
            actor_state=adam("actor"),
            critics=CriticPair(
                theta1=nets.unflatten_params(arrays, "critic1"),
                theta2=nets.unflatten_params(arrays, "critic2"),
                state1=adam("critic1"),
                state2=adam("critic2"),
            ),
            max_action=float(arrays["meta/max_action"][0]),
            target_phi=nets.unflatten_params(arrays, "target_actor"),
            target_theta1=nets.unflatten_params(arrays, "target_critic1"),
            target_theta2=nets.unflatten_params(arrays, "target_critic2"),
        )


# ----------------------------------------------------------------------
# 공통 헬퍼
# ----------------------------------------------------------------------
def alpha_schedule(step: int, total_steps: int, a_start: float, a_end: float) -> float:
    """a_start 에서 a_end 까지 선형 스케줄."""
    if total_steps <= 0:
        return a_start
    fraction = min(max(step / total_steps, 0.0), 1.0)
    return a_start + (a_end - a_start) * fraction


def squash_sample(mean: np.ndarray, sigma: np.ndarray, noise: np.ndarray, max_action: float) -> np.ndarray:
    return max_action * np.tanh(mean + sigma * noise)


def cem_warm_start(
    mean: np.ndarray, sigma: np.ndarray, max_action: float, sigma_floor: float
) -> Tuple[np.ndarray, np.ndarray]:
    """
    actor 가우시안을 행동 공간 제안분포로 옮깁니다.
    평균은 tanh 로 압축하고, 표준편차는 박스 크기를 넘지 않게 자릅니다.
    """
    init_mean = max_action * np.tanh(mean)
    init_sigma = np.maximum(np.minimum(max_action * sigma, max_action), sigma_floor)
    return init_mean, init_sigma


def population_q_fn(states: np.ndarray, theta: Params) -> Callable[[np.ndarray], np.ndarray]:
    """(B, n_pop, A) 후보를 한 번의 forward 로 평가하는 CEM 점수 함수."""

    def q_fn(population: np.ndarray) -> np.ndarray:
        batch, n_pop, action_dim = population.shape
        repeated = np.repeat(states, n_pop, axis=0)
        return nets.critic_values(repeated, population.reshape(batch * n_pop, action_dim), theta).reshape(batch, n_pop)

    return q_fn


def cem_actions(
    states: np.ndarray,
    theta: Params,
    mean: np.ndarray,
    sigma: np.ndarray,
    cem: CemConfig,
    rng: np.random.Generator,
    max_action: float,
) -> np.ndarray:
    init_mean, init_sigma = cem_warm_start(mean, sigma, max_action, cem.sigma_floor)
    best, _, _ = cem_search_batch(population_q_fn(states, theta), init_mean, init_sigma, cem, rng, max_action)
    return best


def max_min_target(
    r: np.ndarray,
    done: np.ndarray,
    gamma: float,
    q1_hat: np.ndarray,
    q2_hat: np.ndarray,
    q1_tilde: np.ndarray,
    q2_tilde: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    y = r + gamma * (1 - done) * max(min(Q1, Q2)(a_hat), min(Q1, Q2)(a_tilde))

    Returns:
        (y, pick_tilde): pick_tilde 는 a_tilde 쪽 최솟값이 엄격히 클 때만 True (동점은 a_hat)
    """
    m_hat = np.minimum(q1_hat, q2_hat)
    m_tilde = np.minimum(q1_tilde, q2_tilde)
    y = r + gamma * (1.0 - done) * np.maximum(m_hat, m_tilde)
    return y, m_tilde > m_hat


# ----------------------------------------------------------------------
# 타깃
# ----------------------------------------------------------------------
def compute_target(
    batch: TransitionBatch,
    theta1: Params,
    theta2: Params,
    phi: Params,
    cfg: GracConfig,
    rng: np.random.Generator,
    max_action: float,
    target_theta1: Optional[Params] = None,
    target_theta2: Optional[Params] = None,
    target_phi: Optional[Params] = None,
) -> TargetBundle:
    """
    배치에 대한 TD 타깃과 정규화 기준값을 계산합니다.

    use_maxmin 이면 a_hat ~ pi(s') 와 a_tilde = CEM(Q2(s', .)) 중 critic 최솟값이 큰 쪽을 택합니다.
    꺼져 있으면 clipped double-Q (use_double_q=False 면 Q1 단독) 타깃을 씁니다.
    타깃 네트워크가 주어지면 y 계산에 그것을 쓰고, y'_j 는 항상 현재 critic 으로 계산합니다.
    """
    s_next = batch.s_next
    bootstrap_phi = target_phi if target_phi is not None else phi
    q_theta1 = target_theta1 if target_theta1 is not None else theta1
    q_theta2 = target_theta2 if target_theta2 is not None else theta2

    mean, sigma = nets.actor_forward(s_next, bootstrap_phi)
    noise = rng.standard_normal(mean.shape)
    a_hat = squash_sample(mean, sigma, noise, max_action)
    q1_hat = nets.critic_values(s_next, a_hat, q_theta1)

    if cfg.use_maxmin:
        q2_hat = nets.critic_values(s_next, a_hat, q_theta2)
        a_tilde = cem_actions(s_next, q_theta2, mean, sigma, cfg.cem, rng, max_action)
        q1_tilde = nets.critic_values(s_next, a_tilde, q_theta1)
        q2_tilde = nets.critic_values(s_next, a_tilde, q_theta2)
        y, pick_tilde = max_min_target(batch.r, batch.done, cfg.gamma, q1_hat, q2_hat, q1_tilde, q2_tilde)
        a_dagger = np.where(pick_tilde[:, None], a_tilde, a_hat)
    else:
        if cfg.use_double_q:
            bootstrap = np.minimum(q1_hat, nets.critic_values(s_next, a_hat, q_theta2))
        else:
            bootstrap = q1_hat
        y = batch.r + cfg.gamma * (1.0 - batch.done) * bootstrap
        a_dagger = a_hat

    return TargetBundle(
        y=y,
        a_dagger=a_dagger,
        y1_prime=nets.critic_values(s_next, a_dagger, theta1),
        y2_prime=nets.critic_values(s_next, a_dagger, theta2),
    )


# ----------------------------------------------------------------------
# Critic
# ----------------------------------------------------------------------
def critic_loss_t(
    p1: nets.TensorParams,
    p2: nets.TensorParams,
    batch: TransitionBatch,
    bundle: TargetBundle,
    use_target_regularization: bool = True,
) -> Tensor:
    """
    mean[(y - Q1(s,a))^2 + (y - Q2(s,a))^2 + reg (y'1 - Q1(s',a+))^2 + reg (y'2 - Q2(s',a+))^2]

    정규화 항은 (s, a) 와 (s', a+) 를 한 배치로 쌓아 critic 마다 forward 한 번으로 계산합니다.
    """
    graph = next(iter(p1.values())).graph
    batch_size = len(batch)
    states, actions = batch.s, batch.a
    targets1 = targets2 = bundle.y
    if use_target_regularization:
        states = np.concatenate([batch.s, batch.s_next])
        actions = np.concatenate([batch.a, bundle.a_dagger])
        targets1 = np.concatenate([bundle.y, bundle.y1_prime])
        targets2 = np.concatenate([bundle.y, bundle.y2_prime])

    rows = len(states)
    s = graph.constant(states)
    a = graph.constant(actions)
    q1 = ad.reshape(nets.critic_forward_t(p1, s, a), (rows,))
    q2 = ad.reshape(nets.critic_forward_t(p2, s, a), (rows,))
    total = ad.add(ad.sum(ad.square(ad.sub(targets1, q1))), ad.sum(ad.square(ad.sub(targets2, q2))))
    return ad.mul(total, 1.0 / batch_size)


def critic_loss_and_grads(
    batch: TransitionBatch,
    bundle: TargetBundle,
    theta1: Params,
    theta2: Params,
    use_target_regularization: bool = True,
) -> Tuple[float, Params, Params]:
    graph = ComputationGraph()
    p1 = nets.bind(graph, theta1, "q1/")
    p2 = nets.bind(graph, theta2, "q2/")
    loss = critic_loss_t(p1, p2, batch, bundle, use_target_regularization)
    value = loss.item()
    if not np.isfinite(value):
        raise DivergenceError("Critic loss is not finite", context={"loss": value})
    grads = graph.backward(loss)
    grads1 = {name: grads[f"q1/{name}"] for name in theta1}
    grads2 = {name: grads[f"q2/{name}"] for name in theta2}
    return value, grads1, grads2


def critic_loss(
    batch: TransitionBatch,
    bundle: TargetBundle,
    theta1: Params,
    theta2: Params,
    use_target_regularization: bool = True,
) -> float:
    graph = ComputationGraph(requires_grad=False)
    p1 = nets.bind(graph, theta1, trainable=False)
    p2 = nets.bind(graph, theta2, trainable=False)
    return critic_loss_t(p1, p2, batch, bundle, use_target_regularization).item()


def critic_update_loop(
    batch: TransitionBatch,
    bundle: TargetBundle,
    critics: CriticPair,
    cfg: GracConfig,
    alpha: float,
) -> CriticLoopResult:
    """
    고정된 타깃으로 최대 K 번 Adam 스텝을 밟고, 처음으로 L_k < alpha * L_1 이 되면 멈춥니다.

    Returns:
        CriticLoopResult: 수행한 반복 수와 첫/마지막 손실

    Raises:
        DivergenceError: 손실이나 그래디언트가 유한하지 않을 때
    """
    loss_first = loss_last = 0.0
    iterations = 0
    for k in range(1, cfg.K + 1):
        loss_last, grads1, grads2 = critic_loss_and_grads(
            batch, bundle, critics.theta1, critics.theta2, cfg.use_target_regularization
        )
        if k == 1:
            loss_first = loss_last
        critics.step(grads1, grads2, cfg.lr_critic)
        iterations = k
        if loss_last < alpha * loss_first:
            break
    return CriticLoopResult(iterations=iterations, loss_first=loss_first, loss_last=loss_last)


# ----------------------------------------------------------------------
# Actor
# ----------------------------------------------------------------------
def frozen_critic(theta: Params) -> CriticFn:
    """그래디언트가 theta 로 흐르지 않는 Q(s, a) [B, 1]."""

    def q(states: Tensor, actions: Tensor) -> Tensor:
        return nets.critic_forward_t(nets.bind(states.graph, theta, trainable=False), states, actions)

    return q


def frozen_min_critic(theta1: Params, theta2: Params) -> CriticFn:
    q1, q2 = frozen_critic(theta1), frozen_critic(theta2)
    return lambda states, actions: ad.minimum(q1(states, actions), q2(states, actions))


def actor_q_loss_t(
    p_phi: nets.TensorParams, states: np.ndarray, noise: np.ndarray, critic: CriticFn, max_action: float
) -> Tensor:
    """-mean Q(s, a_hat), a_hat 는 고정된 noise 로 재매개화한 샘플."""
    graph = next(iter(p_phi.values())).graph
    s = graph.constant(states)
    mean, log_sigma = nets.actor_forward_t(p_phi, s)
    action, _ = nets.sample_action_t(mean, log_sigma, noise, max_action)
    return ad.neg(ad.mean(critic(s, action)))


def prepare_cem_update(
    states: np.ndarray,
    phi: Params,
    theta1: Params,
    noise: np.ndarray,
    cem: CemConfig,
    rng: np.random.Generator,
    max_action: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    CEM 손실의 상수 부분을 계산합니다.

    Returns:
        (a_bar [B, A], weight [B]): weight = max(0, Q1(s, a_bar) - Q1(s, a_hat))
    """
    mean, sigma = nets.actor_forward(states, phi)
    a_hat = squash_sample(mean, sigma, noise, max_action)
    a_bar = cem_actions(states, theta1, mean, sigma, cem, rng, max_action)
    improvement = nets.critic_values(states, a_bar, theta1) - nets.critic_values(states, a_hat, theta1)
    return a_bar, np.maximum(improvement, 0.0)


def actor_cem_loss_t(
    p_phi: nets.TensorParams,
    states: np.ndarray,
    a_bar: np.ndarray,
    weight: np.ndarray,
    max_action: float,
    cem_loss_weight: float,
) -> Tensor:
    """-mean[w * log pi(a_bar | s)] * cem_loss_weight (w 는 상수)."""
    graph = next(iter(p_phi.values())).graph
    mean, log_sigma = nets.actor_forward_t(p_phi, graph.constant(states))
    log_prob = nets.log_prob_of_action_t(mean, log_sigma, a_bar, max_action)
    return ad.mul(ad.neg(ad.mean(ad.mul(log_prob, weight))), cem_loss_weight)


def actor_q_loss(
    batch: TransitionBatch, phi: Params, theta1: Params, rng: np.random.Generator, max_action: float
) -> float:
    noise = rng.standard_normal((len(batch), phi["mu.b"].shape[0]))
    graph = ComputationGraph(requires_grad=False)
    return actor_q_loss_t(nets.bind(graph, phi, trainable=False), batch.s, noise, frozen_critic(theta1), max_action).item()


def actor_cem_loss(
    batch: TransitionBatch,
    phi: Params,
    theta1: Params,
    cfg: GracConfig,
    rng: np.random.Generator,
    max_action: float,
    cem_loss_weight: float,
) -> float:
    noise = rng.standard_normal((len(batch), phi["mu.b"].shape[0]))
    a_bar, weight = prepare_cem_update(batch.s, phi, theta1, noise, cfg.cem, rng, max_action)
    graph = ComputationGraph(requires_grad=False)
    p_phi = nets.bind(graph, phi, trainable=False)
    return actor_cem_loss_t(p_phi, batch.s, a_bar, weight, max_action, cem_loss_weight).item()


def actor_update(
    agent: GracAgent,
    states: np.ndarray,
    cfg: GracConfig,
    cem_loss_weight: float,
    rng: np.random.Generator,
) -> bool:
    """
    phi <- phi - lr_actor * grad(use_q_loss * Q-loss + use_cem_loss * CEM-loss).
    두 손실이 모두 꺼져 있으면 아무것도 하지 않고 False 를 반환합니다.
    """
    if not (cfg.use_q_loss or cfg.use_cem_loss):
        return False

    max_action = agent.max_action
    noise = rng.standard_normal((states.shape[0], agent.phi["mu.b"].shape[0]))
    theta1, theta2 = agent.critics.theta1, agent.critics.theta2

    graph = ComputationGraph()
    p_phi = nets.bind(graph, agent.phi, "pi/")
    terms = []
    if cfg.use_q_loss:
        critic = frozen_min_critic(theta1, theta2) if cfg.use_min_q_actor else frozen_critic(theta1)
        terms.append(actor_q_loss_t(p_phi, states, noise, critic, max_action))
    if cfg.use_cem_loss:
        a_bar, weight = prepare_cem_update(states, agent.phi, theta1, noise, cfg.cem, rng, max_action)
        terms.append(actor_cem_loss_t(p_phi, states, a_bar, weight, max_action, cem_loss_weight))

    total = terms[0] if len(terms) == 1 else ad.add(terms[0], terms[1])
    value = total.item()
    if not np.isfinite(value):
        raise DivergenceError("Actor loss is not finite", context={"loss": value})
    grads = graph.backward(total)
    try:
        agent.phi, agent.actor_state = adam_step(
            agent.phi, {name: grads[f"pi/{name}"] for name in agent.phi}, agent.actor_state, cfg.lr_actor
        )
    except NonFiniteError as e:
        raise DivergenceError(f"Actor update diverged: {e}", context=e.context) from e
    return True


# ----------------------------------------------------------------------
# 행동 선택
# ----------------------------------------------------------------------
def choose_by_min_q(
    a_hat: np.ndarray, a_tilde: np.ndarray, m_hat: np.ndarray, m_tilde: np.ndarray
) -> np.ndarray:
    """min-over-critics 값이 엄격히 큰 쪽. 동점이면 a_hat."""
    pick = np.asarray(m_tilde > m_hat)
    return np.where(pick[..., None], a_tilde, a_hat)


def select_behavior_action(
    state: np.ndarray,
    agent: GracAgent,
    cfg: GracConfig,
    rng: np.random.Generator,
    mode: ActionMode = ActionMode.TRAIN,
) -> np.ndarray:
    """
    Args:
        state: [S]
        mode: RANDOM (warmup, 박스 균등), EVAL (squash 된 평균), TRAIN (a_hat 과 CEM 후보 중 택1)

    Returns:
        행동 [A]
    """
    max_action = agent.max_action
    action_dim = agent.phi["mu.b"].shape[0]
    if mode == ActionMode.RANDOM:
        return rng.uniform(-max_action, max_action, size=action_dim)

    states = np.asarray(state, dtype=np.float64).reshape(1, -1)
    mean, sigma = nets.actor_forward(states, agent.phi)
    if mode == ActionMode.EVAL:
        return nets.squashed_mean(mean[0], max_action)

    a_hat = squash_sample(mean, sigma, rng.standard_normal(mean.shape), max_action)
    if not cfg.use_maxmin:
        return a_hat[0]

    theta1, theta2 = agent.critics.theta1, agent.critics.theta2
    a_tilde = cem_actions(states, theta2, mean, sigma, cfg.cem, rng, max_action)
    m_hat = np.minimum(nets.critic_values(states, a_hat, theta1), nets.critic_values(states, a_hat, theta2))
    m_tilde = np.minimum(nets.critic_values(states, a_tilde, theta1), nets.critic_values(states, a_tilde, theta2))
    return choose_by_min_q(a_hat, a_tilde, m_hat, m_tilde)[0]


# ----------------------------------------------------------------------
# 학습 스텝
# ----------------------------------------------------------------------
@dataclass
class TrainingWorld:
    """
    환경, 버퍼, 에이전트와 현재 에피소드 진행 상황.
    """
    env: Environment
    buffer: ReplayBuffer
    agent: GracAgent
    rng: np.random.Generator
    observation: Optional[np.ndarray] = None
    episode_return: float = 0.0
    episodes_completed: int = 0
    last_episode_return: float = 0.0

    @classmethod
    def create(cls, env: Environment, agent: GracAgent, cfg: GracConfig, rng: np.random.Generator) -> "TrainingWorld":
        spec = env.spec
        buffer = ReplayBuffer(cfg.buffer_size, spec.state_dim, spec.action_dim, spec.max_action)
        world = cls(env=env, buffer=buffer, agent=agent, rng=rng)
        world.reset_episode()
        return world

    def reset_episode(self) -> None:
        self.observation = self.env.reset(int(self.rng.integers(0, 2**31 - 1)))
        self.episode_return = 0.0


def train_step(
    world: TrainingWorld,
    cfg: GracConfig,
    step: int,
    total_steps: int,
    cem_loss_weight: float,
) -> StepMetrics:
    """
    환경 상호작용 1회 + (warmup 이후) 그래디언트 단계 1회.

    Raises:
        DivergenceError: 손실/그래디언트/Q 값이 유한하지 않을 때
    """
    agent, rng = world.agent, world.rng
    mode = ActionMode.RANDOM if step < cfg.warmup_steps else ActionMode.TRAIN

    try:
        action = select_behavior_action(world.observation, agent, cfg, rng, mode)
        outcome = world.env.step(action)
        world.buffer.push(
            Transition(
                s=world.observation,
                a=action,
                r=outcome.reward * cfg.reward_scale,
                s_next=outcome.observation,
                done=outcome.done,
            )
        )
        world.episode_return += outcome.reward
        episode_return = world.episode_return
        if outcome.done or outcome.truncated:
            world.episodes_completed += 1
            world.last_episode_return = episode_return
            world.reset_episode()
        else:
            world.observation = outcome.observation

        if mode == ActionMode.RANDOM:
            return StepMetrics(step=step, episode_return=episode_return)

        batch = world.buffer.sample(cfg.batch_size, rng)
        bundle = compute_target(
            batch,
            agent.critics.theta1,
            agent.critics.theta2,
            agent.phi,
            cfg,
            rng,
            agent.max_action,
            target_theta1=agent.target_theta1,
            target_theta2=agent.target_theta2,
            target_phi=agent.target_phi,
        )
        alpha = alpha_schedule(step, total_steps, cfg.alpha_start, cfg.alpha_end)
        loop = critic_update_loop(batch, bundle, agent.critics, cfg, alpha)
        actor_update(agent, batch.s, cfg, cem_loss_weight, rng)

        if cfg.use_target_network:
            tau = cfg.target_network_tau
            agent.target_theta1 = nets.polyak_update(agent.target_theta1, agent.critics.theta1, tau)
            agent.target_theta2 = nets.polyak_update(agent.target_theta2, agent.critics.theta2, tau)
            agent.target_phi = nets.polyak_update(agent.target_phi, agent.phi, tau)
    except DivergenceError:
        raise
    except NonFiniteError as e:
        raise DivergenceError(f"Training diverged at step {step}: {e}", context={"step": step, **e.context}) from e

    y1_mean = float(np.mean(bundle.y1_prime))
    gap_mean = float(np.mean(bundle.y1_prime - bundle.y2_prime))
    if not (np.isfinite(y1_mean) and np.isfinite(gap_mean)):
        raise DivergenceError(f"Q estimates are not finite at step {step}", context={"step": step})

    return StepMetrics(
        step=step,
        episode_return=episode_return,
        y1_mean=y1_mean,
        gap_mean=gap_mean,
        critic_iters=loop.iterations,
        alpha=alpha,
        critic_loss_first=loop.loss_first,
        critic_loss_last=loop.loss_last,
        updated=True,
    )
