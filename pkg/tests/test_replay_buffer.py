"""
Tests for the FIFO replay buffer.
"""
import numpy as np
import pytest

from app.core.exceptions import EmptyBufferError, GracError, NonFiniteError
from app.repositories.replay_buffer import ReplayBuffer, Transition
from tests.conftest import make_transition


def _filled(capacity: int, count: int) -> ReplayBuffer:
    buffer = ReplayBuffer(capacity, state_dim=3, action_dim=2)
    for i in range(count):
        buffer.push(make_transition(i))
    return buffer


def test_push_into_empty_buffer():
    assert len(_filled(5, 1)) == 1


def test_full_buffer_evicts_oldest_first():
    buffer = _filled(2, 3)
    assert len(buffer) == 2
    assert [t.r for t in buffer.contents()] == [1.0, 2.0]


def test_contents_preserve_insertion_order():
    buffer = _filled(10, 10)
    assert [t.r for t in buffer.contents()] == [float(i) for i in range(10)]
    assert buffer.contents()[3].s.tolist() == [3.0, 3.0, 3.0]


def test_storage_grows_past_initial_rows():
    buffer = _filled(3000, 2500)
    assert len(buffer) == 2500
    assert buffer.contents()[-1].r == 2499.0


def test_single_element_buffer_samples_copies():
    buffer = _filled(5, 1)
    batch = buffer.sample(4, np.random.default_rng(0))
    assert len(batch) == 4
    assert np.all(batch.r == 0.0)
    assert batch.s.shape == (4, 3)
    assert batch.a.shape == (4, 2)


def test_sampling_is_deterministic_for_equal_rng_state():
    buffer = _filled(10, 10)
    b1 = buffer.sample(8, np.random.default_rng(5))
    b2 = buffer.sample(8, np.random.default_rng(5))
    assert np.array_equal(b1.r, b2.r)


def test_sampling_is_uniform():
    buffer = _filled(10, 10)
    draws = buffer.sample(100_000, np.random.default_rng(9)).r.astype(int)
    counts = np.bincount(draws, minlength=10)
    sigma = np.sqrt(100_000 * 0.1 * 0.9)
    assert np.all(np.abs(counts - 10_000) < 3 * sigma)


def test_done_flag_is_stored_as_float():
    buffer = ReplayBuffer(4, state_dim=1, action_dim=1)
    buffer.push(Transition(s=np.zeros(1), a=np.zeros(1), r=0.0, s_next=np.zeros(1), done=True))
    assert buffer.sample(1, np.random.default_rng(0)).done.tolist() == [1.0]


def test_empty_buffer_cannot_be_sampled():
    with pytest.raises(EmptyBufferError):
        ReplayBuffer(4, 3, 2).sample(1, np.random.default_rng(0))


def test_invalid_transitions_are_rejected():
    buffer = ReplayBuffer(4, state_dim=1, action_dim=1, max_action=1.0)
    with pytest.raises(NonFiniteError):
        buffer.push(Transition(s=np.array([np.nan]), a=np.zeros(1), r=0.0, s_next=np.zeros(1), done=False))
    with pytest.raises(GracError):
        buffer.push(Transition(s=np.zeros(1), a=np.array([1.5]), r=0.0, s_next=np.zeros(1), done=False))
    with pytest.raises(GracError):
        buffer.push(Transition(s=np.zeros(2), a=np.zeros(1), r=0.0, s_next=np.zeros(1), done=False))
    assert len(buffer) == 0
