"""
Tests for the actor and critic networks.
"""
import numpy as np
import pytest

from app.core.exceptions import ShapeMismatchError
from app.infrastructure import autodiff as ad
from app.infrastructure.autodiff import ComputationGraph, grad_check_parameters
from app.services import networks as nets


def _zeros_like(params):
    return {k: np.zeros_like(v) for k, v in params.items()}


def test_zero_actor_outputs_standard_normal(small_actor):
    mean, sigma = nets.actor_forward(np.ones(3), _zeros_like(small_actor))
    assert np.array_equal(mean, [0.0, 0.0])
    assert np.array_equal(sigma, [1.0, 1.0])


def test_actor_batch_shapes_and_determinism(small_actor, rng):
    states = rng.standard_normal((5, 3))
    mean, sigma = nets.actor_forward(states, small_actor)
    assert mean.shape == (5, 2) and sigma.shape == (5, 2)
    mean2, sigma2 = nets.actor_forward(states, small_actor)
    assert np.array_equal(mean, mean2) and np.array_equal(sigma, sigma2)
    assert np.all(sigma >= np.exp(nets.LOG_SIGMA_MIN))
    assert np.all(sigma <= np.exp(nets.LOG_SIGMA_MAX))


def test_actor_rejects_wrong_state_dim(small_actor):
    with pytest.raises(ShapeMismatchError):
        nets.actor_forward(np.ones(4), small_actor)


def test_zero_noise_zero_mean_gives_zero_action():
    action, _ = nets.sample_action(np.zeros(2), np.ones(2), np.zeros(2), max_action=2.0)
    assert np.array_equal(action, [0.0, 0.0])


def test_sampled_actions_stay_in_box(rng):
    for _ in range(200):
        noise = rng.standard_normal(3) * 10.0
        action, log_prob = nets.sample_action(rng.standard_normal(3) * 5.0, np.full(3, 2.0), noise, max_action=1.5)
        assert np.all(np.abs(action) <= 1.5)
        assert np.isfinite(log_prob)


def test_sample_log_prob_agrees_with_density_of_the_action(rng):
    mean, sigma = np.array([0.2, -0.4]), np.array([0.5, 0.8])
    noise = rng.standard_normal(2)
    action, log_prob = nets.sample_action(mean, sigma, noise, max_action=2.0)
    assert nets.log_prob_of_action(mean, sigma, action, 2.0) == pytest.approx(log_prob, abs=1e-8)


def test_squashed_density_integrates_to_one():
    max_action = 2.0
    grid = np.linspace(-max_action, max_action, 400_001)[1:-1]
    n = grid.shape[0]
    log_p = nets.log_prob_of_action(
        np.full((n, 1), 0.3), np.full((n, 1), 0.7), grid.reshape(-1, 1), max_action
    )
    assert np.trapz(np.exp(log_p), grid) == pytest.approx(1.0, abs=1e-3)


def test_sample_action_t_matches_numpy_version(small_actor, rng):
    states = rng.standard_normal((4, 3))
    noise = rng.standard_normal((4, 2))
    g = ComputationGraph(requires_grad=False)
    mean_t, log_sigma_t = nets.actor_forward_t(nets.bind(g, small_actor, trainable=False), g.constant(states))
    action_t, log_prob_t = nets.sample_action_t(mean_t, log_sigma_t, noise, 1.0)
    mean, sigma = nets.actor_forward(states, small_actor)
    for i in range(4):
        action, log_prob = nets.sample_action(mean[i], sigma[i], noise[i], 1.0)
        assert np.allclose(action_t.data[i], action)
        assert log_prob_t.data[i] == pytest.approx(log_prob)


def test_actor_log_prob_gradient_matches_finite_differences(small_actor, rng):
    states = rng.standard_normal((4, 3))
    noise = rng.standard_normal((4, 2))

    def loss(g, p):
        mean, log_sigma = nets.actor_forward_t(p, g.constant(states))
        action, log_prob = nets.sample_action_t(mean, log_sigma, noise, 2.0)
        return ad.mean(log_prob) + ad.mean(ad.sum(action, axis=1))

    assert grad_check_parameters(loss, small_actor, max_coords=10, rng=rng) < 1e-4


def test_zero_critic_outputs_zero(small_critics, rng):
    q = nets.critic_forward(rng.standard_normal((6, 3)), rng.standard_normal((6, 2)), _zeros_like(small_critics[0]))
    assert q.shape == (6, 1)
    assert np.array_equal(q, np.zeros((6, 1)))


def test_critic_rejects_mismatched_dims(small_critics):
    with pytest.raises(ShapeMismatchError):
        nets.critic_forward(np.ones((2, 3)), np.ones((3, 2)), small_critics[0])
    with pytest.raises(ShapeMismatchError):
        nets.critic_forward(np.ones((2, 3)), np.ones((2, 3)), small_critics[0])


def test_critic_action_gradient_matches_finite_differences(small_critics, rng):
    states = rng.standard_normal((3, 3))
    theta = small_critics[0]

    def q_sum(g, p):
        return ad.sum(nets.critic_forward_t(nets.bind(g, theta, trainable=False), g.constant(states), p["a"]))

    assert grad_check_parameters(q_sum, {"a": rng.uniform(-1, 1, size=(3, 2))}) < 1e-4


def test_twin_critics_are_initialized_independently(small_critics):
    theta1, theta2 = small_critics
    assert not np.array_equal(theta1["l1.W"], theta2["l1.W"])


def test_polyak_update_and_flatten_roundtrip(small_critics):
    theta1, theta2 = small_critics
    mixed = nets.polyak_update(theta1, theta2, tau=0.25)
    assert np.allclose(mixed["out.b"], 0.25 * theta2["out.b"] + 0.75 * theta1["out.b"])
    flat = nets.flatten_params(theta1, "critic1")
    assert all(k.startswith("critic1/") for k in flat)
    restored = nets.unflatten_params(flat, "critic1")
    assert restored.keys() == theta1.keys()
    assert nets.unflatten_params(flat, "critic2") is None
