import collections

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ier.qfunction import Batch
from ier.replay import (
    Experience,
    InterpolatedReplay,
    ReplayMemory,
    TransitionDict,
    read_trace,
    write_trace,
)


def real(i, r=0.0):
    return Experience(i % 64, i % 4, r, (i + 1) % 64, False, False)


def syn(i, r=0.5):
    return Experience(i % 64, i % 4, r, (i + 1) % 64, i % 5 == 0, True)


class ReferenceIER:
    """Deque model of the dual-queue memory, one item at a time."""

    def __init__(self, s_er, s_ier, s_synthetic):
        self.s_er, self.s_ier, self.s_syn = s_er, s_ier, s_synthetic
        self.real = collections.deque()
        self.syn = collections.deque()

    def store_real(self, e):
        self.real.append(e)
        if len(self.real) > self.s_er:
            self.real.popleft()
        while len(self.real) + len(self.syn) > self.s_ier:
            self.syn.popleft()

    def store_synthetic(self, e):
        self.syn.append(e)
        while len(self.syn) > min(self.s_syn, self.s_ier - len(self.real)):
            self.syn.popleft()


def test_store_one_real():
    m = InterpolatedReplay(10, 10, 5)
    m.store_real(real(0))
    assert (m.n_real, m.n_synthetic, len(m)) == (1, 0, 1)


def test_real_fifo_eviction():
    m = InterpolatedReplay(2, 10, 0)
    for i in range(3):
        m.store_real(real(i))
    assert m.real_contents() == [real(1), real(2)]


def test_shrinking_memory_hand_trace():
    m = InterpolatedReplay(10, 10, 8)
    for i in range(8):
        m.store_synthetic(syn(i))
    for i in range(3):
        m.store_real(real(i))
    assert m.n_synthetic == 7
    assert len(m) == 10
    # the oldest synthetic item went first
    assert m.synthetic_contents() == [syn(i) for i in range(1, 8)]


def test_store_synthetic_default_capacity():
    m = InterpolatedReplay(100_000, 100_000, 20_000)
    m.store_synthetic(syn(0))
    assert m.n_synthetic == 1


def test_zero_synthetic_capacity_stores_nothing():
    m = InterpolatedReplay(10, 10, 0)
    m.store_synthetic(syn(0))
    m.extend_synthetic(Batch.from_experiences([syn(1), syn(2)]))
    assert m.n_synthetic == 0


def test_full_real_rejects_synthetic():
    m = InterpolatedReplay(5, 5, 3)
    for i in range(5):
        m.store_real(real(i))
    m.store_synthetic(syn(0))
    assert m.n_synthetic == 0 and len(m) == 5


def test_flag_checks():
    m = InterpolatedReplay(5, 5, 3)
    with pytest.raises(ValueError):
        m.store_real(syn(0))
    with pytest.raises(ValueError):
        m.store_synthetic(real(0))
    with pytest.raises(ValueError):
        ReplayMemory(5).store(syn(0))


def test_capacity_validation():
    with pytest.raises(ValueError):
        InterpolatedReplay(10, 5, 1)
    with pytest.raises(ValueError):
        InterpolatedReplay(0, 5, 1)


def test_vanilla_replay_fifo():
    m = ReplayMemory(3)
    for i in range(5):
        m.store(real(i))
    assert m.contents() == [real(2), real(3), real(4)]


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 12),
    st.integers(0, 8),
    st.integers(0, 15),
    st.lists(st.tuples(st.sampled_from(["real", "syn", "many"]), st.integers(0, 14)), max_size=120),
)
def test_matches_reference_deques(s_er, extra, s_syn, ops):
    s_ier = s_er + extra
    m = InterpolatedReplay(s_er, s_ier, s_syn)
    ref = ReferenceIER(s_er, s_ier, s_syn)
    counter = 0
    for kind, n in ops:
        if kind == "real":
            e = real(counter)
            m.store_real(e)
            ref.store_real(e)
            counter += 1
        elif kind == "syn":
            e = syn(counter)
            m.store_synthetic(e)
            ref.store_synthetic(e)
            counter += 1
        else:
            items = [syn(counter + j) for j in range(n)]
            counter += n
            if items:
                m.extend_synthetic(Batch.from_experiences(items))
            for e in items:
                ref.store_synthetic(e)
        assert m.real_contents() == list(ref.real)
        assert m.synthetic_contents() == list(ref.syn)
        assert m.n_real <= s_er
        assert len(m) <= s_ier
        assert m.n_synthetic <= s_syn


def test_sample_whole_content_is_permutation():
    m = InterpolatedReplay(10, 20, 10)
    for i in range(6):
        m.store_real(real(i))
    for i in range(4):
        m.store_synthetic(syn(100 + i))
    drawn = m.sample(10, np.random.default_rng(0))
    assert sorted(drawn) == sorted(m.contents())


def test_sample_marks_synthetic():
    m = InterpolatedReplay(10, 20, 10)
    m.store_real(real(0, r=1.0))
    m.store_synthetic(syn(1, r=0.25))
    drawn = {e.r: e.synthetic for e in m.sample(2, np.random.default_rng(0))}
    assert drawn == {1.0: False, 0.25: True}


def test_sample_distinct_slots():
    m = InterpolatedReplay(1000, 1000, 100)
    for i in range(300):
        m.store_real(Experience(0, 0, float(i), 0, False))
    rng = np.random.default_rng(1)
    for _ in range(200):
        b = m.sample_batch(32, rng)
        assert len(set(b.r.tolist())) == 32


def test_sample_too_many_raises():
    m = InterpolatedReplay(10, 10, 0)
    m.store_real(real(0))
    with pytest.raises(ValueError):
        m.sample(2, np.random.default_rng(0))


def test_sample_frequency_uniform():
    m = InterpolatedReplay(10, 10, 0)
    for r in (1.0, 1.0, 1.0, 2.0):
        m.store_real(Experience(0, 0, r, 0, False))
    rng = np.random.default_rng(2)
    n = 100_000
    hits = sum(m.sample_batch(1, rng).r[0] == 1.0 for _ in range(n))
    assert abs(hits / n - 0.75) < 0.01


def test_vanilla_and_interpolated_sample_identically():
    a = ReplayMemory(50)
    b = InterpolatedReplay(50, 50, 0)
    for i in range(80):
        a.store(real(i, r=float(i)))
        b.store_real(real(i, r=float(i)))
    ra, rb = np.random.default_rng(3), np.random.default_rng(3)
    for _ in range(20):
        assert a.sample(16, ra) == b.sample(16, rb)


def test_dict_update_and_mean():
    d = TransitionDict()
    d.update(Experience(0, 1, -1.0, 8, True))
    e = d.entry(0, 1)
    assert (e.count, e.r_avg, list(e.next_states)) == (1, -1.0, [8])
    d.update(Experience(0, 1, 0.0, 8, False))
    assert d.entry(0, 1).r_avg == -0.5
    assert len(d.entry(0, 1).next_states) == 1


def test_dict_rejects_synthetic():
    with pytest.raises(ValueError):
        TransitionDict().update(syn(0))


def test_dict_lookup_views():
    d = TransitionDict()
    assert d.lookup(3) == {}
    d.update(Experience(3, 2, 1.0, 4, False))
    assert d.lookup(3) == {2: (1.0, (4,))}
    d.update(Experience(5, 2, 1.0, 4, False))
    assert d.lookup(3) == {2: (1.0, (4,))}


def test_dict_version_changes_only_at_state():
    d = TransitionDict()
    d.observe(1, 0, 0.0, 2)
    v1, v2 = d.version(1), d.version(2)
    d.observe(2, 0, 0.0, 3)
    assert d.version(1) == v1 and d.version(2) == v2 + 1


def test_dict_survives_replay_eviction():
    m = InterpolatedReplay(2, 2, 0)
    d = TransitionDict()
    for i in range(5):
        e = Experience(0, 0, float(i), i, False)
        m.store_real(e)
        d.update(e)
    assert m.n_real == 2
    assert d.entry(0, 0).count == 5
    assert d.entry(0, 0).r_avg == 2.0
    assert list(d.entry(0, 0).next_states) == [0, 1, 2, 3, 4]


def test_dict_matches_brute_force_on_random_trace():
    rng = np.random.default_rng(4)
    d = TransitionDict()
    trace = []
    for _ in range(10_000):
        e = Experience(int(rng.integers(16)), int(rng.integers(4)), float(rng.choice([-1.0, 0.0, 1.0])), int(rng.integers(16)), False)
        trace.append(e)
        d.update(e)
    for s in range(16):
        brute = {}
        for e in trace:
            if e.s == s:
                brute.setdefault(e.a, []).append(e)
        view = d.lookup(s)
        assert set(view) == set(brute)
        for a, es in brute.items():
            rewards = [e.r for e in es]
            assert view[a][0] == sum(rewards) / len(rewards)
            assert set(view[a][1]) == {e.s_next for e in es}


def test_trace_round_trip(tmp_path):
    items = [real(0, -1.0), syn(1, 0.5)]
    path = tmp_path / "trace.jsonl"
    write_trace(path, items)
    lines = path.read_text().splitlines()
    assert len(lines) == 2 and '"synthetic": true' in lines[1]
    assert read_trace(path) == items
