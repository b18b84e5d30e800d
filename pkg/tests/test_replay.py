import numpy as np
import pytest

from insertrl.replay import (
    Batch,
    ReplayBuffers,
    SOURCE_HUMAN,
    SOURCE_POLICY,
    Transition,
    sample_symmetric,
)


def make_transition(tag: float, source=SOURCE_POLICY, reward=0.0, done=False):
    return Transition(
        obs_teacher=np.full(4, tag), obs_student=np.full(3, tag),
        action=np.zeros(2), reward=reward, done=done,
        next_obs_teacher=np.full(4, tag), next_obs_student=np.full(3, tag),
        source=source)


def make_buffers(capacity=1000):
    return ReplayBuffers(teacher_dim=4, student_dim=3, act_dim=2,
                         policy_capacity=capacity)


def test_transition_contracts():
    with pytest.raises(ValueError):
        make_transition(0.0, reward=0.5)
    with pytest.raises(ValueError):
        make_transition(0.0, reward=1.0, done=False)
    make_transition(0.0, reward=1.0, done=True)  # fine
    with pytest.raises(ValueError):
        Transition(np.zeros(4), np.zeros(3), np.array([1.5, 0.0]), 0.0,
                   False, np.zeros(4), np.zeros(3), SOURCE_POLICY)
    with pytest.raises(ValueError):
        make_transition(0.0, source="robot")


def test_routing_by_source():
    buf = make_buffers()
    buf.add(make_transition(1.0, SOURCE_POLICY))
    buf.add(make_transition(2.0, SOURCE_HUMAN))
    buf.add(make_transition(3.0, SOURCE_HUMAN))
    assert buf.policy_size == 1
    assert buf.human_size == 2


def test_ring_buffer_wraps():
    buf = make_buffers(capacity=8)
    for i in range(20):
        buf.add(make_transition(float(i), SOURCE_POLICY))
    assert buf.policy_size == 8
    kept = sorted(set(buf.d_p.obs_s[:, 0].tolist()))
    assert kept == [12.0, 13.0, 14.0, 15.0, 16.0, 17.0, 18.0, 19.0]


def test_symmetric_split():
    buf = make_buffers()
    for i in range(10):
        buf.add(make_transition(0.0, SOURCE_POLICY))
    for i in range(10):
        buf.add(make_transition(1.0, SOURCE_HUMAN))
    batch = sample_symmetric(buf, 256, np.random.default_rng(0))
    assert len(batch) == 256
    frac_h = float(np.mean(batch.obs_student[:, 0]))
    assert frac_h == 0.5  # exactly half from each buffer


def test_fallback_to_nonempty_buffer():
    buf = make_buffers()
    for i in range(5):
        buf.add(make_transition(1.0, SOURCE_HUMAN))
    batch = sample_symmetric(buf, 256, np.random.default_rng(0))
    assert len(batch) == 256
    assert np.all(batch.obs_student[:, 0] == 1.0)


def test_both_empty_raises():
    with pytest.raises(ValueError):
        sample_symmetric(make_buffers(), 64, np.random.default_rng(0))


def test_odd_batch_raises():
    buf = make_buffers()
    buf.add(make_transition(0.0))
    with pytest.raises(ValueError):
        sample_symmetric(buf, 7, np.random.default_rng(0))


def test_sampling_uniform_chi_square():
    # 10-element buffer, ~1e5 draws: every element within 3 sigma of 10%
    buf = make_buffers()
    for i in range(10):
        buf.add(make_transition(float(i), SOURCE_POLICY))
    rng = np.random.default_rng(123)
    counts = np.zeros(10)
    n_batches, bsz = 400, 256
    for _ in range(n_batches):
        b = sample_symmetric(buf, bsz, rng)
        for v in b.obs_student[:, 0]:
            counts[int(v)] += 1
    n = n_batches * bsz
    expected = n / 10
    sigma = np.sqrt(n * 0.1 * 0.9)
    assert np.all(np.abs(counts - expected) <= 3 * sigma)


def test_batch_view_selection():
    buf = make_buffers()
    buf.add(make_transition(2.0))
    b = sample_symmetric(buf, 2, np.random.default_rng(0))
    assert b.obs("teacher").shape[1] == 4
    assert b.obs("student").shape[1] == 3
    assert b.next_obs("teacher").shape[1] == 4
