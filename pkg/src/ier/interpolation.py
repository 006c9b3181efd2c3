"""Reward-averaging interpolant for the interpolated replay.

Each call draws one query state and turns the dictionary statistics of
that state into synthetic transitions: for every observed action, one
transition per distinct observed next state, all carrying the mean reward
seen for that state-action pair.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gridworld import GridWorld
from .qfunction import Batch
from .replay import Experience, TransitionDict


@dataclass(frozen=True)
class InterpolationConfig:
    c_start_interpolation: int = 0
    enabled: bool = True

    def __post_init__(self):
        if self.c_start_interpolation < 0:
            raise ValueError("c_start_interpolation must be non-negative")


_EMPTY = Batch(
    np.zeros(0, dtype=np.int64),
    np.zeros(0, dtype=np.int64),
    np.zeros(0),
    np.zeros(0, dtype=np.int64),
    np.zeros(0, dtype=bool),
)


@dataclass
class SyntheticBatch:
    """Synthetic transitions from one interpolation call, stored column-wise.

    ``query_state`` is ``None`` when the call was gated off and drew nothing.
    """

    query_state: int | None
    batch: Batch = _EMPTY

    def __len__(self):
        return len(self.batch)

    @property
    def items(self) -> list[Experience]:
        b = self.batch
        return [
            Experience(int(s), int(a), float(r), int(s2), bool(t), True)
            for s, a, r, s2, t in zip(b.s, b.a, b.r, b.s_next, b.terminal)
        ]

    def per_action_counts(self) -> dict[int, int]:
        actions, counts = np.unique(self.batch.a, return_counts=True)
        return dict(zip(actions.tolist(), counts.tolist()))


def synthesize(tdict: TransitionDict, x_q: int, world: GridWorld, cache: dict | None = None) -> Batch:
    """Synthetic transitions for query state ``x_q`` from the dictionary.

    Actions come in first-observed order, next states likewise within an
    action. ``cache`` maps states to ``(version, batch)`` and is refreshed
    whenever the dictionary has changed at ``x_q``; cached arrays must be
    treated as read-only.
    """
    if cache is not None:
        version = tdict.version(x_q)
        hit = cache.get(x_q)
        if hit is not None and hit[0] == version:
            return hit[1]
        batch = synthesize(tdict, x_q, world)
        cache[x_q] = (version, batch)
        return batch
    actions_at = tdict.actions_at(x_q)
    if not actions_at:
        return _EMPTY
    terminal = world.terminal_of
    a_col, r_col, s2_col = [], [], []
    for a, entry in actions_at.items():
        r_avg = entry.reward_sum / entry.count
        for s_next in entry.next_states:
            a_col.append(a)
            r_col.append(r_avg)
            s2_col.append(s_next)
    n = len(a_col)
    return Batch(
        np.full(n, x_q, dtype=np.int64),
        np.array(a_col, dtype=np.int64),
        np.array(r_col, dtype=np.float64),
        np.array(s2_col, dtype=np.int64),
        np.array([terminal[s] for s in s2_col], dtype=bool),
    )


def draw_query_state(world: GridWorld, rng: np.random.Generator) -> int:
    """Uniform draw over nonterminal states."""
    states = world.nonterminal_states
    return int(states[rng.integers(len(states))])


def interpolate_step(
    tdict: TransitionDict,
    real_count: int,
    cfg: InterpolationConfig,
    world: GridWorld,
    rng: np.random.Generator,
    cache: dict | None = None,
) -> SyntheticBatch:
    # gated calls consume no random draws
    if not cfg.enabled or real_count < cfg.c_start_interpolation:
        return SyntheticBatch(None)
    x_q = draw_query_state(world, rng)
    return SyntheticBatch(x_q, synthesize(tdict, x_q, world, cache))


def expected_vs_average_gap(tdict: TransitionDict, world: GridWorld, s: int, a: int) -> float:
    """Absolute error of the averaged reward against the analytic expectation."""
    entry = tdict.entry(s, a)
    return abs(entry.r_avg - world.expected_reward(s, a))
