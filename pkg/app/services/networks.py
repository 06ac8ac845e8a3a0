"""
Actor (tanh-squashed Gaussian policy) and twin-critic MLPs.
Actor(tanh 로 압축된 가우시안 정책)와 twin critic MLP.

파라미터는 이름 -> np.ndarray 딕셔너리로 보관하고, forward 때마다
ComputationGraph 에 leaf 로 올려서(bind) 미분합니다.
"""
import math
from typing import Dict, Optional, Tuple

import numpy as np

from app.core.exceptions import ShapeMismatchError
from app.infrastructure import autodiff as ad
from app.infrastructure.autodiff import ComputationGraph, Tensor

Params = Dict[str, np.ndarray]
TensorParams = Dict[str, Tensor]

LOG_SIGMA_MIN = -20.0
LOG_SIGMA_MAX = 2.0
SQUASH_EPS = 1e-6
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

ACTOR_LAYERS = ("l1", "l2", "mu", "log_sigma")
CRITIC_LAYERS = ("l1", "l2", "out")


# ----------------------------------------------------------------------
# 초기화
# ----------------------------------------------------------------------
def _init_linear(rng: np.random.Generator, fan_in: int, fan_out: int) -> Tuple[np.ndarray, np.ndarray]:
    bound = 1.0 / math.sqrt(fan_in)
    weight = rng.uniform(-bound, bound, size=(fan_in, fan_out))
    bias = rng.uniform(-bound, bound, size=(fan_out,))
    return weight, bias


def init_actor(state_dim: int, action_dim: int, rng: np.random.Generator, hidden_dim: int = 256) -> Params:
    """
    Actor 파라미터: 은닉층 2개(ReLU) + mean / log_sigma 헤드.
    가중치는 U[-1/sqrt(fan_in), 1/sqrt(fan_in)] 에서 뽑습니다.
    """
    shapes = {
        "l1": (state_dim, hidden_dim),
        "l2": (hidden_dim, hidden_dim),
        "mu": (hidden_dim, action_dim),
        "log_sigma": (hidden_dim, action_dim),
    }
    params: Params = {}
    for layer in ACTOR_LAYERS:
        params[f"{layer}.W"], params[f"{layer}.b"] = _init_linear(rng, *shapes[layer])
    return params


def init_critic(state_dim: int, action_dim: int, rng: np.random.Generator, hidden_dim: int = 256) -> Params:
    """Critic 파라미터: concat(s, a) -> H -> H -> 1."""
    shapes = {
        "l1": (state_dim + action_dim, hidden_dim),
        "l2": (hidden_dim, hidden_dim),
        "out": (hidden_dim, 1),
    }
    params: Params = {}
    for layer in CRITIC_LAYERS:
        params[f"{layer}.W"], params[f"{layer}.b"] = _init_linear(rng, *shapes[layer])
    return params


def init_critic_pair(
    state_dim: int, action_dim: int, rng: np.random.Generator, hidden_dim: int = 256
) -> Tuple[Params, Params]:
    """theta1, theta2 를 같은 rng 에서 연속으로 뽑으므로 서로 다른 값이 됩니다."""
    theta1 = init_critic(state_dim, action_dim, rng, hidden_dim)
    theta2 = init_critic(state_dim, action_dim, rng, hidden_dim)
    return theta1, theta2


def copy_params(params: Params) -> Params:
    return {k: v.copy() for k, v in params.items()}


def polyak_update(target: Params, source: Params, tau: float) -> Params:
    """target <- tau * source + (1 - tau) * target."""
    return {k: tau * source[k] + (1.0 - tau) * target[k] for k in target}


# ----------------------------------------------------------------------
# 그래프 바인딩
# ----------------------------------------------------------------------
def bind(graph: ComputationGraph, params: Params, prefix: str = "", trainable: bool = True) -> TensorParams:
    """
    파라미터를 그래프에 올립니다. trainable=False 면 상수로 올려서 그래디언트가 흐르지 않습니다.
    """
    if trainable:
        return {name: graph.parameter(prefix + name, value) for name, value in params.items()}
    return {name: graph.constant(value) for name, value in params.items()}


def _linear(x: Tensor, p: TensorParams, layer: str) -> Tensor:
    return ad.add(ad.matmul(x, p[f"{layer}.W"]), p[f"{layer}.b"])


def _as_batch(x: np.ndarray, dim: int, what: str) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    batch = x.reshape(1, -1) if single else x
    if batch.ndim != 2 or batch.shape[1] != dim:
        raise ShapeMismatchError(what, batch.shape, (None, dim))
    return batch, single


# ----------------------------------------------------------------------
# Actor
# ----------------------------------------------------------------------
def actor_forward_t(p: TensorParams, state: Tensor) -> Tuple[Tensor, Tensor]:
    """
    Returns:
        (mean, log_sigma): log_sigma 는 [-20, 2] 로 clamp 된 값
    """
    h = ad.relu(_linear(state, p, "l1"))
    h = ad.relu(_linear(h, p, "l2"))
    mean = _linear(h, p, "mu")
    log_sigma = ad.clamp(_linear(h, p, "log_sigma"), LOG_SIGMA_MIN, LOG_SIGMA_MAX)
    return mean, log_sigma


def actor_forward(state: np.ndarray, phi: Params) -> Tuple[np.ndarray, np.ndarray]:
    """
    Args:
        state: [S] 또는 [B, S]

    Returns:
        (mean, sigma): 입력이 1-D 면 [A], 아니면 [B, A]
    """
    state_dim = phi["l1.W"].shape[0]
    batch, single = _as_batch(state, state_dim, "actor_forward")
    graph = ComputationGraph(requires_grad=False)
    mean, log_sigma = actor_forward_t(bind(graph, phi, trainable=False), graph.constant(batch))
    mean_np, sigma_np = mean.data, np.exp(log_sigma.data)
    if single:
        return mean_np[0], sigma_np[0]
    return mean_np, sigma_np


def _squash_correction(u: np.ndarray, max_action: float) -> np.ndarray:
    """log(max_a * (1 - tanh(u)^2)) 를 안정적으로 계산합니다."""
    return math.log(max_action) + 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


def _squash_correction_t(u: Tensor, max_action: float) -> Tensor:
    inner = ad.sub(ad.sub(math.log(2.0), u), ad.softplus(ad.neg(ad.mul(u, 2.0))))
    return ad.add(ad.mul(inner, 2.0), math.log(max_action))


def sample_action_t(
    mean: Tensor, log_sigma: Tensor, noise: np.ndarray, max_action: float
) -> Tuple[Tensor, Tensor]:
    """
    재매개화 샘플링: a = max_a * tanh(mean + sigma * noise).

    Returns:
        (action [B, A], log_prob [B])
    """
    graph = mean.graph
    noise = np.asarray(noise, dtype=np.float64)
    sigma = ad.exp(log_sigma)
    u = ad.add(mean, ad.mul(sigma, noise))
    action = ad.mul(ad.tanh(u), max_action)

    gauss = ad.sub(ad.neg(log_sigma), graph.constant(0.5 * noise * noise + HALF_LOG_2PI))
    log_prob = ad.sub(ad.sum(gauss, axis=1), ad.sum(_squash_correction_t(u, max_action), axis=1))
    return action, log_prob


def log_prob_of_action_t(mean: Tensor, log_sigma: Tensor, action: np.ndarray, max_action: float) -> Tensor:
    """
    외부에서 주어진 행동(CEM 결과 등)의 log pi(a|s).
    atanh 발산을 막기 위해 a/max_a 를 ±(1 - 1e-6) 로 자릅니다.

    Returns:
        log_prob [B]
    """
    graph = mean.graph
    ratio = np.clip(np.asarray(action, dtype=np.float64) / max_action, -1.0 + SQUASH_EPS, 1.0 - SQUASH_EPS)
    u = np.arctanh(ratio)
    z = ad.mul(ad.sub(u, mean), ad.exp(ad.neg(log_sigma)))
    gauss = ad.sub(ad.sub(ad.mul(ad.square(z), -0.5), log_sigma), HALF_LOG_2PI)
    correction = graph.constant(_squash_correction(u, max_action).sum(axis=1))
    return ad.sub(ad.sum(gauss, axis=1), correction)


def sample_action(
    mean: np.ndarray, sigma: np.ndarray, noise: np.ndarray, max_action: float
) -> Tuple[np.ndarray, float]:
    """
    단일 상태용 numpy 버전.

    Returns:
        (action [A], log_prob)
    """
    mean = np.asarray(mean, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    u = mean + sigma * noise
    action = max_action * np.tanh(u)
    gauss = np.sum(-0.5 * noise * noise - np.log(sigma) - HALF_LOG_2PI)
    log_prob = gauss - np.sum(_squash_correction(u, max_action))
    return action, float(log_prob)


def log_prob_of_action(mean: np.ndarray, sigma: np.ndarray, action: np.ndarray, max_action: float) -> np.ndarray:
    """numpy 버전. mean/sigma/action 은 [A] 또는 [B, A]."""
    graph = ComputationGraph(requires_grad=False)
    mean_b = np.atleast_2d(np.asarray(mean, dtype=np.float64))
    log_sigma_b = np.atleast_2d(np.log(np.asarray(sigma, dtype=np.float64)))
    action_b = np.atleast_2d(np.asarray(action, dtype=np.float64))
    out = log_prob_of_action_t(graph.constant(mean_b), graph.constant(log_sigma_b), action_b, max_action).data
    return out if np.ndim(mean) > 1 else out[0]


def squashed_mean(mean: np.ndarray, max_action: float) -> np.ndarray:
    """평가 모드 행동: max_a * tanh(mean)."""
    return max_action * np.tanh(mean)


# ----------------------------------------------------------------------
# Critic
# ----------------------------------------------------------------------
def critic_forward_t(p: TensorParams, state: Tensor, action: Tensor) -> Tensor:
    """concat(s, a) -> Q, shape [B, 1]."""
    x = ad.concat([state, action], axis=-1)
    h = ad.relu(_linear(x, p, "l1"))
    h = ad.relu(_linear(h, p, "l2"))
    return _linear(h, p, "out")


def critic_forward(state: np.ndarray, action: np.ndarray, theta: Params) -> np.ndarray:
    """
    Args:
        state: [B, S], action: [B, A] (1-D 입력이면 배치 1 로 취급)

    Returns:
        Q 값 [B, 1]
    """
    in_dim = theta["l1.W"].shape[0]
    state_b = np.atleast_2d(np.asarray(state, dtype=np.float64))
    action_b = np.atleast_2d(np.asarray(action, dtype=np.float64))
    if state_b.shape[0] != action_b.shape[0] or state_b.shape[1] + action_b.shape[1] != in_dim:
        raise ShapeMismatchError("critic_forward", state_b.shape, action_b.shape)
    graph = ComputationGraph(requires_grad=False)
    q = critic_forward_t(bind(graph, theta, trainable=False), graph.constant(state_b), graph.constant(action_b))
    return q.data


def critic_values(state: np.ndarray, action: np.ndarray, theta: Params) -> np.ndarray:
    """critic_forward 의 1-D 버전: [B]."""
    return critic_forward(state, action, theta)[:, 0]


def flatten_params(params: Params, prefix: str) -> Dict[str, np.ndarray]:
    return {f"{prefix}/{name}": value for name, value in params.items()}


def unflatten_params(arrays: Dict[str, np.ndarray], prefix: str) -> Optional[Params]:
    head = f"{prefix}/"
    params = {name[len(head):]: value for name, value in arrays.items() if name.startswith(head)}
    return params or None
