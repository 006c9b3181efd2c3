"""Replay storage: vanilla FiFo memory, the dual-queue interpolated memory,
and the cumulative per state-action transition dictionary."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .qfunction import Batch


class Experience(NamedTuple):
    s: int
    a: int
    r: float
    s_next: int
    terminal: bool
    synthetic: bool = False


class _Store:
    """Column storage shared by one or more rings: ``(s, a, s_next)`` ints and ``(r, terminal)`` floats."""

    def __init__(self, size: int):
        self.ints = np.zeros((size, 3), dtype=np.int64)
        self.floats = np.zeros((size, 2), dtype=np.float64)

    def gather(self, pos: np.ndarray) -> Batch:
        ints = self.ints[pos]
        floats = self.floats[pos]
        return Batch(ints[:, 0], ints[:, 1], floats[:, 0], ints[:, 2], floats[:, 1] != 0.0)


class _Ring:
    """Fixed-capacity FIFO occupying rows ``[offset, offset + capacity)`` of a store."""

    def __init__(self, store: _Store, offset: int, capacity: int):
        if capacity < 0:
            raise ValueError("capacity must be non-negative")
        self.store = store
        self.offset = offset
        self.capacity = capacity
        self.head = 0
        self.count = 0

    def __len__(self):
        return self.count

    def popleft(self, n: int = 1) -> None:
        n = min(n, self.count)
        if n > 0:
            self.head = (self.head + n) % self.capacity
            self.count -= n

    def append(self, s, a, r, s_next, terminal) -> None:
        if self.capacity == 0:
            return
        if self.count == self.capacity:
            self.popleft()
        i = self.offset + (self.head + self.count) % self.capacity
        self.store.ints[i] = (s, a, s_next)
        self.store.floats[i] = (r, terminal)
        self.count += 1

    def extend(self, batch: Batch) -> None:
        """Append a batch of items; equivalent to calling :meth:`append` per item."""
        n = len(batch)
        if self.capacity == 0 or n == 0:
            return
        cols = batch
        if n > self.capacity:
            cols = Batch(*(x[n - self.capacity :] for x in batch))
            n = self.capacity
        self.popleft(self.count + n - self.capacity)
        idx = self.offset + (self.head + self.count + np.arange(n)) % self.capacity
        self.store.ints[idx, 0] = cols.s
        self.store.ints[idx, 1] = cols.a
        self.store.ints[idx, 2] = cols.s_next
        self.store.floats[idx, 0] = cols.r
        self.store.floats[idx, 1] = cols.terminal
        self.count += n

    def positions(self, idx: np.ndarray) -> np.ndarray:
        return self.offset + (self.head + idx) % self.capacity

    def items(self, synthetic: bool) -> list[Experience]:
        if self.count == 0:
            return []
        return _batch_to_experiences(self.store.gather(self.positions(np.arange(self.count))), [synthetic] * self.count)


def _draw_indices(total: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """``k`` distinct indices, uniform over ``range(total)``.

    An i.i.d. draw conditioned on having no repeats is already uniform
    without replacement; repeats fall back to ``Generator.choice``.
    """
    if k > total:
        raise ValueError(f"cannot sample {k} experiences from {total} stored")
    idx = rng.integers(0, total, k)
    if len(set(idx.tolist())) == k:
        return idx
    return rng.choice(total, k, replace=False)


def _batch_to_experiences(batch: Batch, synthetic) -> list[Experience]:
    return [
        Experience(int(s), int(a), float(r), int(s2), bool(t), bool(syn))
        for s, a, r, s2, t, syn in zip(batch.s, batch.a, batch.r, batch.s_next, batch.terminal, synthetic)
    ]


class ReplayMemory:
    """Vanilla experience replay: one FiFo queue of real transitions."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._store = _Store(capacity)
        self._ring = _Ring(self._store, 0, capacity)

    def __len__(self):
        return len(self._ring)

    @property
    def n_real(self) -> int:
        return len(self._ring)

    @property
    def n_synthetic(self) -> int:
        return 0

    def store(self, e: Experience) -> None:
        if e.synthetic:
            raise ValueError("vanilla replay only stores real experiences")
        self._ring.append(e.s, e.a, e.r, e.s_next, e.terminal)

    store_real = store

    def push_real(self, s: int, a: int, r: float, s_next: int, terminal: bool) -> None:
        self._ring.append(s, a, r, s_next, terminal)

    def sample_batch(self, k: int, rng: np.random.Generator) -> Batch:
        return self._store.gather(self._ring.positions(_draw_indices(len(self), k, rng)))

    def sample(self, k: int, rng: np.random.Generator) -> list[Experience]:
        batch = self.sample_batch(k, rng)
        return _batch_to_experiences(batch, np.zeros(k, dtype=bool))

    def contents(self) -> list[Experience]:
        return self._ring.items(False)


class InterpolatedReplay:
    """Real FiFo queue plus a ShrinkingMemory of synthetic transitions.

    The synthetic queue may hold at most ``min(s_synthetic, s_ier - n_real)``
    items. Storing real data that pushes the total over ``s_ier`` evicts the
    oldest synthetic items first.
    """

    def __init__(self, s_er: int, s_ier: int, s_synthetic: int):
        if s_er < 1 or s_ier < s_er or s_synthetic < 0:
            raise ValueError(f"need 1 <= s_er <= s_ier and s_synthetic >= 0, got {s_er}, {s_ier}, {s_synthetic}")
        self.s_er = s_er
        self.s_ier = s_ier
        self.s_synthetic = s_synthetic
        syn_cap = min(s_synthetic, s_ier)
        self._store = _Store(s_er + syn_cap)
        self._real = _Ring(self._store, 0, s_er)
        self._syn = _Ring(self._store, s_er, syn_cap)

    def __len__(self):
        return self._real.count + self._syn.count

    @property
    def n_real(self) -> int:
        return self._real.count

    @property
    def n_synthetic(self) -> int:
        return self._syn.count

    @property
    def synthetic_capacity(self) -> int:
        return min(self.s_synthetic, self.s_ier - self._real.count)

    def store_real(self, e: Experience) -> None:
        if e.synthetic:
            raise ValueError("store_real got a synthetic experience")
        self.push_real(e.s, e.a, e.r, e.s_next, e.terminal)

    def push_real(self, s: int, a: int, r: float, s_next: int, terminal: bool) -> None:
        self._real.append(s, a, r, s_next, terminal)
        self._syn.popleft(self._real.count + self._syn.count - self.s_ier)

    def store_synthetic(self, e: Experience) -> None:
        if not e.synthetic:
            raise ValueError("store_synthetic got a real experience")
        self._syn.append(e.s, e.a, e.r, e.s_next, e.terminal)
        self._syn.popleft(self._syn.count - self.synthetic_capacity)

    def extend_synthetic(self, batch: Batch) -> None:
        """Store many synthetic transitions at once, oldest first."""
        self._syn.extend(batch)
        self._syn.popleft(self._syn.count - self.synthetic_capacity)

    def _positions(self, idx: np.ndarray) -> np.ndarray:
        real, syn = self._real, self._syn
        if syn.count == 0:
            return real.positions(idx)
        n_real = real.count
        return np.where(idx < n_real, real.positions(idx), syn.offset + (syn.head + idx - n_real) % syn.capacity)

    def sample_batch(self, k: int, rng: np.random.Generator) -> Batch:
        return self._store.gather(self._positions(_draw_indices(len(self), k, rng)))

    def sample(self, k: int, rng: np.random.Generator) -> list[Experience]:
        idx = _draw_indices(len(self), k, rng)
        return _batch_to_experiences(self._store.gather(self._positions(idx)), idx >= self._real.count)

    def real_contents(self) -> list[Experience]:
        return self._real.items(False)

    def synthetic_contents(self) -> list[Experience]:
        return self._syn.items(True)

    def contents(self) -> list[Experience]:
        return self.real_contents() + self.synthetic_contents()


class TransitionEntry:
    __slots__ = ("count", "reward_sum", "next_states")

    def __init__(self):
        self.count = 0
        self.reward_sum = 0.0
        # dict as an insertion-ordered set
        self.next_states: dict[int, None] = {}

    @property
    def r_avg(self) -> float:
        return self.reward_sum / self.count


class TransitionDict:
    """Cumulative statistics of every real transition ever observed.

    Entries are never removed, even when the replay evicts the underlying
    transitions.
    """

    def __init__(self):
        self._entries: dict[tuple[int, int], TransitionEntry] = {}
        self._by_state: dict[int, dict[int, TransitionEntry]] = {}
        self._version: dict[int, int] = {}

    def __len__(self):
        return len(self._entries)

    def __contains__(self, key) -> bool:
        return key in self._entries

    def update(self, e: Experience) -> None:
        if e.synthetic:
            raise ValueError("the transition dictionary only tracks real experiences")
        self.observe(e.s, e.a, e.r, e.s_next)

    def observe(self, s: int, a: int, r: float, s_next: int) -> None:
        entry = self._entries.get((s, a))
        if entry is None:
            entry = self._entries[(s, a)] = TransitionEntry()
            self._by_state.setdefault(s, {})[a] = entry
        entry.count += 1
        entry.reward_sum += r
        entry.next_states[s_next] = None
        self._version[s] = self._version.get(s, 0) + 1

    def version(self, s: int) -> int:
        """Number of observations made at ``s``; changes whenever its entries do."""
        return self._version.get(s, 0)

    def entry(self, s: int, a: int) -> TransitionEntry:
        try:
            return self._entries[(s, a)]
        except KeyError:
            raise KeyError(f"state-action ({s}, {a}) never observed") from None

    def actions_at(self, s: int) -> dict[int, TransitionEntry]:
        """Live entries for every action observed at ``s``, in first-seen order."""
        return self._by_state.get(s, {})

    def lookup(self, s: int) -> dict[int, tuple[float, tuple[int, ...]]]:
        return {a: (e.r_avg, tuple(e.next_states)) for a, e in self.actions_at(s).items()}


def write_trace(path: str | Path, experiences: Iterable[Experience]) -> None:
    """JSON-lines dump, one experience per line with all six fields."""
    with open(path, "w") as fh:
        for e in experiences:
            fh.write(json.dumps(e._asdict()) + "\n")


def read_trace(path: str | Path) -> list[Experience]:
    with open(path) as fh:
        return [Experience(**json.loads(line)) for line in fh if line.strip()]
