import numpy as np
import pytest
from scipy import stats

from uav_harvest.encode import Observation
from uav_harvest.mdp import Action
from uav_harvest.replay import ReplayMemory, Transition


def make_transition(tag: float) -> Transition:
    obs = Observation(map_tensor=np.full((3, 3, 5), tag, dtype=np.float32),
                      time_scalar=tag)
    return Transition(obs=obs, action=Action.HOVER, reward=tag, next_obs=obs,
                      terminal=False)


def test_push_and_latest():
    mem = ReplayMemory(capacity=4)
    t = make_transition(1.0)
    mem.push(t)
    assert len(mem) == 1
    assert mem.latest is t


def test_fifo_eviction():
    mem = ReplayMemory(capacity=2)
    a, b, c = (make_transition(float(i)) for i in range(3))
    mem.push(a)
    mem.push(b)
    mem.push(c)
    assert len(mem) == 2
    assert mem.snapshot() == [b, c]
    assert mem.latest is c


def test_fill_to_capacity_exactly():
    mem = ReplayMemory(capacity=16)
    items = [make_transition(float(i)) for i in range(16)]
    for t in items:
        mem.push(t)
    assert len(mem) == 16
    assert mem.snapshot() == items


def test_eviction_order_with_tags():
    mem = ReplayMemory(capacity=8)
    for i in range(30):
        mem.push(make_transition(float(i)))
    rewards = [t.reward for t in mem.snapshot()]
    assert rewards == [float(i) for i in range(22, 30)]


def test_sample_single_item_buffer(rng):
    mem = ReplayMemory(capacity=8)
    t = make_transition(3.0)
    mem.push(t)
    batch = mem.sample_combined(4, rng)
    assert len(batch) == 4
    assert all(item is t for item in batch)


def test_sample_m1_is_latest_only(rng):
    mem = ReplayMemory(capacity=8)
    for i in range(5):
        mem.push(make_transition(float(i)))
    batch = mem.sample_combined(1, rng)
    assert batch == [mem.latest]


def test_sample_from_empty_memory_raises(rng):
    with pytest.raises(IndexError):
        ReplayMemory(capacity=4).sample_combined(4, rng)


def test_latest_always_present_and_uniform_draws(rng):
    size, m, batches = 1000, 128, 10_000
    mem = ReplayMemory(capacity=size)
    for i in range(size):
        mem.push(make_transition(float(i)))
    counts = np.zeros(size, dtype=np.int64)
    latest_hits = 0
    for _ in range(batches):
        batch = mem.sample_combined(m, rng)
        if any(item is mem.latest for item in batch):
            latest_hits += 1
        for item in batch[1:]:
            counts[int(item.reward)] += 1
    assert latest_hits == batches  # the defining combined-replay property
    # chi-squared uniformity of the m-1 draws at alpha = 0.01
    expected = counts.sum() / size
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    critical = stats.chi2.ppf(0.99, df=size - 1)
    assert chi2 < critical
