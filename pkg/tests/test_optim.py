"""
Tests for the Adam optimizer.
"""
import numpy as np
import pytest

from app.core.exceptions import NonFiniteError, ShapeMismatchError
from app.infrastructure.optim import AdamOptimizer, AdamState, adam_step


def test_zero_gradient_keeps_params_and_counts_step():
    params = {"w": np.array([1.0, -2.0])}
    new_params, state = adam_step(params, {"w": np.zeros(2)}, AdamState.zeros_like(params), lr=1e-3)
    assert np.array_equal(new_params["w"], params["w"])
    assert state.t == 1


def test_first_step_moves_by_learning_rate():
    params = {"w": np.array([0.5])}
    new_params, _ = adam_step(params, {"w": np.array([1.0])}, AdamState.zeros_like(params), lr=1e-3)
    assert new_params["w"][0] - 0.5 == pytest.approx(-1e-3, rel=1e-6)


def test_constant_gradient_descends():
    optimizer = AdamOptimizer({"w": np.array([0.0, 0.0])}, lr=1e-2)
    for _ in range(50):
        optimizer.step({"w": np.array([2.0, -3.0])})
    assert optimizer.params["w"][0] < 0.0
    assert optimizer.params["w"][1] > 0.0
    assert optimizer.state.t == 50


def test_inputs_are_not_mutated():
    params = {"w": np.array([1.0])}
    state = AdamState.zeros_like(params)
    adam_step(params, {"w": np.array([1.0])}, state, lr=0.1)
    assert params["w"][0] == 1.0
    assert state.t == 0
    assert state.m["w"][0] == 0.0


def test_non_finite_gradient_names_the_parameter():
    params = {"layer.W": np.zeros(2)}
    with pytest.raises(NonFiniteError) as info:
        adam_step(params, {"layer.W": np.array([0.0, np.nan])}, AdamState.zeros_like(params), lr=1e-3)
    assert info.value.context["parameter"] == "layer.W"


def test_shape_mismatch_and_bad_learning_rate():
    params = {"w": np.zeros(2)}
    with pytest.raises(ShapeMismatchError):
        adam_step(params, {"w": np.zeros(3)}, AdamState.zeros_like(params), lr=1e-3)
    with pytest.raises(ValueError):
        adam_step(params, {"w": np.zeros(2)}, AdamState.zeros_like(params), lr=0.0)
