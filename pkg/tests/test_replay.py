import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asmplan.agents.replay import (
    PrioritizedBuffer,
    ReplayBuffer,
    SumTree,
    Transition,
    nstep_fold,
    per_sample,
    per_update,
)

# chi-squared critical value, p = 0.999, 7 degrees of freedom
CHI2_999_DF7 = 24.322


def tr(tag: int, r: float = 0.0, terminal: bool = False) -> Transition:
    return Transition(s=tag, a=1, r=r, s_next=tag + 1, terminal=terminal)


def test_replay_fifo_eviction():
    buf = ReplayBuffer(capacity=5)
    for i in range(8):
        buf.add(tr(i))
    assert len(buf) == 5
    assert [t.s for t in buf.snapshot()] == [3, 4, 5, 6, 7]


def test_replay_capacity_never_exceeded():
    buf = ReplayBuffer(capacity=3)
    for i in range(100):
        buf.add(tr(i))
        assert len(buf) <= 3


def test_replay_sampling_draws_from_contents():
    buf = ReplayBuffer(capacity=10)
    for i in range(10):
        buf.add(tr(i))
    rng = np.random.default_rng(0)
    batch = buf.sample(64, rng)
    assert len(batch) == 64
    assert {t.s for t in batch} <= set(range(10))


def test_replay_empty_sample_rejected():
    with pytest.raises(ValueError):
        ReplayBuffer(4).sample(1, np.random.default_rng(0))


@given(st.integers(min_value=1, max_value=30), st.integers(min_value=0, max_value=90))
def test_replay_fifo_property(capacity, extra):
    buf = ReplayBuffer(capacity)
    total = capacity + extra
    for i in range(total):
        buf.add(tr(i))
    kept = [t.s for t in buf.snapshot()]
    assert kept == list(range(total - min(capacity, total), total))


def test_sumtree_total_and_find():
    tree = SumTree(4)
    for i, p in enumerate([1.0, 2.0, 3.0, 4.0]):
        tree.set(i, p)
    assert tree.total == 10.0
    # prefix intervals: [0,1) -> 0, [1,3) -> 1, [3,6) -> 2, [6,10) -> 3
    assert tree.find(0.0) == 0
    assert tree.find(0.999) == 0
    assert tree.find(1.0) == 1
    assert tree.find(2.999) == 1
    assert tree.find(3.0) == 2
    assert tree.find(9.999) == 3


def test_sumtree_zero_weight_never_found():
    tree = SumTree(4)
    tree.set(0, 0.0)
    tree.set(1, 5.0)
    tree.set(2, 0.0)
    tree.set(3, 5.0)
    rng = np.random.default_rng(1)
    hits = {tree.find(rng.random() * tree.total) for _ in range(1000)}
    assert hits <= {1, 3}


def test_sumtree_update_changes_total():
    tree = SumTree(8)
    tree.set(2, 4.0)
    tree.set(2, 1.5)
    assert tree.total == 1.5


def test_per_uniform_when_priorities_equal():
    buf = PrioritizedBuffer(capacity=8, alpha=0.6)
    for i in range(8):
        buf.add(tr(i))
    batch, indices, weights = per_sample(buf, 32, beta=0.4, rng=np.random.default_rng(2))
    assert np.allclose(weights, 1.0)
    assert np.allclose(buf.probabilities(), 1.0 / 8)


def test_per_alpha_zero_is_uniform():
    buf = PrioritizedBuffer(capacity=4, alpha=0.0)
    for i in range(4):
        buf.add(tr(i))
    per_update(buf, [0, 1, 2, 3], [0.1, 5.0, 50.0, 500.0])
    assert np.allclose(buf.probabilities(), 0.25)


def test_per_single_element():
    buf = PrioritizedBuffer(capacity=4)
    buf.add(tr(0))
    batch, indices, weights = per_sample(buf, 3, beta=1.0, rng=np.random.default_rng(3))
    assert [t.s for t in batch] == [0, 0, 0]
    assert np.allclose(weights, 1.0)


def test_per_priority_floor_and_monotonicity():
    buf = PrioritizedBuffer(capacity=4, alpha=1.0, priority_floor=1e-3)
    for i in range(3):
        buf.add(tr(i))
    per_update(buf, [0, 1, 2], [0.0, 0.5, -2.0])
    p = [buf._tree.get(i) for i in range(3)]
    assert p[0] == pytest.approx(1e-3)
    assert p[1] == pytest.approx(0.5 + 1e-3)
    assert p[2] == pytest.approx(2.0 + 1e-3)  # sign of the TD error is irrelevant
    assert p[0] < p[1] < p[2]


def test_per_equal_errors_restore_uniform():
    buf = PrioritizedBuffer(capacity=4, alpha=0.6)
    for i in range(4):
        buf.add(tr(i))
    per_update(buf, [0, 1, 2, 3], [3.0, 3.0, 3.0, 3.0])
    assert np.allclose(buf.probabilities(), 0.25)


def test_per_new_items_get_max_priority():
    buf = PrioritizedBuffer(capacity=8, alpha=1.0, priority_floor=1e-3)
    buf.add(tr(0))
    per_update(buf, [0], [9.0])  # max priority now 9.001
    buf.add(tr(1))
    assert buf._tree.get(1) == pytest.approx(9.001)


def test_per_update_rejects_bad_index():
    buf = PrioritizedBuffer(capacity=4)
    buf.add(tr(0))
    with pytest.raises(IndexError):
        per_update(buf, [3], [1.0])


def test_per_sampling_frequencies_chi_squared():
    buf = PrioritizedBuffer(capacity=8, alpha=0.6)
    for i in range(8):
        buf.add(tr(i))
    deltas = [0.05, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2, 6.4]
    per_update(buf, list(range(8)), deltas)
    expected = buf.probabilities()
    rng = np.random.default_rng(11)
    n = 100_000
    counts = np.zeros(8)
    for _ in range(n // 1000):
        _, indices, _ = per_sample(buf, 1000, beta=0.4, rng=rng)
        counts += np.bincount(indices, minlength=8)
    chi2 = float((((counts - n * expected) ** 2) / (n * expected)).sum())
    assert chi2 < CHI2_999_DF7, (chi2, counts / n, expected)


def test_per_importance_weights_formula():
    buf = PrioritizedBuffer(capacity=4, alpha=1.0)
    for i in range(4):
        buf.add(tr(i))
    per_update(buf, [0, 1, 2, 3], [0.099, 0.199, 0.399, 0.799])  # floor brings to .1 .2 .4 .8
    probs = buf.probabilities()
    _, indices, weights = per_sample(buf, 256, beta=0.5, rng=np.random.default_rng(4))
    raw = (4 * probs[indices]) ** -0.5
    assert np.allclose(weights, raw / raw.max())
    assert weights.max() == pytest.approx(1.0)


def test_nstep_identity():
    t = tr(0, r=0.5)
    folded = nstep_fold([t], 1, 0.9)
    assert folded == t


def test_nstep_three_step_example():
    queue = [tr(0, r=0.0), tr(1, r=0.0), tr(2, r=1.0, terminal=True)]
    folded = nstep_fold(queue, 3, 0.9)
    assert folded.r == pytest.approx(0.81)
    assert folded.s == 0
    assert folded.s_next == 3
    assert folded.terminal


def test_nstep_terminal_before_n():
    queue = [tr(0, r=0.2), tr(1, r=1.0, terminal=True)]
    folded = nstep_fold(queue, 3, 0.9)
    assert folded.r == pytest.approx(0.2 + 0.9 * 1.0)
    assert folded.terminal
    assert folded.s_next == 2


def test_nstep_terminal_inside_longer_queue():
    queue = [tr(0, r=0.0), tr(1, r=1.0, terminal=True), tr(5, r=9.0)]
    folded = nstep_fold(queue, 3, 0.5)
    assert folded.r == pytest.approx(0.5)
    assert folded.terminal
    assert folded.s_next == 2


def test_nstep_short_nonterminal_rejected():
    with pytest.raises(ValueError):
        nstep_fold([tr(0), tr(1)], 3, 0.9)


@settings(max_examples=60)
@given(
    st.integers(min_value=1, max_value=6),
    st.lists(st.floats(min_value=-1, max_value=1), min_size=1, max_size=6),
    st.floats(min_value=0.1, max_value=0.99),
)
def test_nstep_fold_reward_formula(n, rewards, gamma):
    queue = [
        tr(i, r=r, terminal=(i == len(rewards) - 1)) for i, r in enumerate(rewards)
    ]
    folded = nstep_fold(queue, n, gamma)
    m = min(n, len(rewards))
    expected = sum(gamma**k * rewards[k] for k in range(m))
    assert folded.r == pytest.approx(expected, abs=1e-12)
