from collections import Counter

import numpy as np
import pytest

from app.core.errors import PreconditionError, StructuralError
from app.services.replay import ReplayBuffer, Transition


def make_transition(i: int, terminal: bool = False) -> Transition:
    return Transition(
        x=np.array([float(i), 0.0]),
        u=np.array([0.0]),
        r=-float(i),
        x_next=np.array([float(i) + 1.0, 0.0]),
        terminal=terminal,
    )


def test_push_into_empty_buffer():
    buffer = ReplayBuffer(2, 1, capacity=4)
    buffer.push(make_transition(0))
    assert buffer.count == 1
    assert len(buffer) == 1


def test_fifo_eviction():
    buffer = ReplayBuffer(2, 1, capacity=2)
    for i in range(3):
        buffer.push(make_transition(i))
    assert buffer.count == 2
    stored = [t.r for t in buffer.transitions()]
    assert stored == [-1.0, -2.0]


def test_capacity_never_exceeded():
    buffer = ReplayBuffer(2, 1, capacity=5)
    for i in range(23):
        buffer.push(make_transition(i))
        assert buffer.count <= 5
    assert [t.r for t in buffer.transitions()] == [-18.0, -19.0, -20.0, -21.0, -22.0]


def test_push_rejects_wrong_dimensions():
    buffer = ReplayBuffer(2, 1, capacity=4)
    with pytest.raises(StructuralError):
        buffer.push(Transition(x=np.zeros(3), u=np.zeros(1), r=0.0, x_next=np.zeros(3)))
    with pytest.raises(StructuralError):
        buffer.push(Transition(x=np.zeros(2), u=np.zeros(2), r=0.0, x_next=np.zeros(2)))


def test_push_rejects_controls_outside_the_box():
    buffer = ReplayBuffer(2, 1, capacity=4, control_low=np.array([-1.0]), control_high=np.array([1.0]))
    with pytest.raises(PreconditionError):
        buffer.push(Transition(x=np.zeros(2), u=np.array([1.5]), r=0.0, x_next=np.zeros(2)))


def test_sample_from_singleton_repeats_it():
    buffer = ReplayBuffer(2, 1, capacity=4)
    buffer.push(make_transition(7, terminal=True))
    batch = buffer.sample(4, np.random.default_rng(0))
    assert len(batch) == 4
    assert all(t.r == -7.0 and t.terminal for t in batch)


def test_sample_empty_buffer_is_a_precondition_error():
    with pytest.raises(PreconditionError):
        ReplayBuffer(2, 1, capacity=4).sample(1, np.random.default_rng(0))


def test_sample_is_deterministic_given_seed():
    buffer = ReplayBuffer(2, 1, capacity=50)
    for i in range(50):
        buffer.push(make_transition(i))
    a = buffer.sample_arrays(16, np.random.default_rng(42))
    b = buffer.sample_arrays(16, np.random.default_rng(42))
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.r, b.r)


def test_full_buffer_batches_only_hold_pushed_transitions():
    capacity = 8
    buffer = ReplayBuffer(2, 1, capacity=capacity)
    for i in range(capacity):
        buffer.push(make_transition(i))
    pushed = Counter(t.r for t in buffer.transitions())
    assert pushed == Counter(-float(i) for i in range(capacity))
    drawn = buffer.sample(200, np.random.default_rng(3))
    assert set(t.r for t in drawn) <= set(pushed)
    for t in drawn:
        assert t.x_next[0] == t.x[0] + 1.0


def test_sampling_is_uniform():
    buffer = ReplayBuffer(2, 1, capacity=10)
    for i in range(10):
        buffer.push(make_transition(i))
    batch = buffer.sample_arrays(100_000, np.random.default_rng(11))
    freq = np.bincount((-batch.r).astype(int), minlength=10) / 100_000
    assert np.all(np.abs(freq - 0.1) < 0.015)


def test_dump_csv(tmp_path):
    buffer = ReplayBuffer(2, 1, capacity=3)
    for i in range(4):
        buffer.push(make_transition(i, terminal=i == 3))
    path = tmp_path / "buffer.csv"
    buffer.dump_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x0,x1,u0,r,x_next0,x_next1,terminal"
    assert len(lines) == 4
    assert lines[1].split(",")[0] == "1.0"
    assert lines[-1].endswith(",1")
