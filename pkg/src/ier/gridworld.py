"""FrozenLake-style gridworld with a tunable slip factor.

States are row-major tile indices. Actions are ``N, E, S, W`` encoded
``0..3``. A slip replaces the intended action by one of its two
perpendicular neighbours, each with probability ``slip / 2``; the opposite
action is never executed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

N, E, S, W = 0, 1, 2, 3
ACTIONS = (N, E, S, W)
ACTION_NAMES = ("N", "E", "S", "W")
N_ACTIONS = 4

_MOVES = {N: (-1, 0), E: (0, 1), S: (1, 0), W: (0, -1)}
_TILES = frozenset("SFHG")

BUILTIN_MAPS = {
    "frozenlake8x8": (
        "SFFFFFFF",
        "FFFFFFFF",
        "FFFHFFFF",
        "FFFFFHFF",
        "FFFHFFFF",
        "FHHFFFHF",
        "FHFFHFHF",
        "FFFHFFFG",
    ),
    "frozenlake4x4": ("SFFF", "FHFH", "FFFH", "HFFG"),
}


class MapError(ValueError):
    """Raised for malformed map text."""


def right_of(action: int) -> int:
    return (action + 1) % 4


def left_of(action: int) -> int:
    return (action + 3) % 4


@dataclass(frozen=True)
class GridMap:
    rows: tuple[str, ...]

    def __post_init__(self):
        rows = tuple(self.rows)
        object.__setattr__(self, "rows", rows)
        if not rows or not rows[0]:
            raise MapError("map is empty")
        width = len(rows[0])
        for i, row in enumerate(rows):
            if len(row) != width:
                raise MapError(f"line {i + 1}: expected {width} columns, got {len(row)}")
            for j, ch in enumerate(row):
                if ch not in _TILES:
                    raise MapError(f"line {i + 1}, column {j + 1}: illegal tile {ch!r}")
        flat = "".join(rows)
        if flat.count("S") != 1:
            raise MapError(f"map needs exactly one 'S', found {flat.count('S')}")
        if "G" not in flat:
            raise MapError("map needs at least one 'G'")

    @property
    def height(self) -> int:
        return len(self.rows)

    @property
    def width(self) -> int:
        return len(self.rows[0])

    @property
    def n_states(self) -> int:
        return self.width * self.height

    def tile(self, s: int) -> str:
        r, c = divmod(s, self.width)
        return self.rows[r][c]

    @property
    def start(self) -> int:
        return "".join(self.rows).index("S")

    def indices_of(self, tile: str) -> list[int]:
        return [i for i, ch in enumerate("".join(self.rows)) if ch == tile]

    def is_terminal_tile(self, s: int) -> bool:
        return self.tile(s) in "HG"

    def to_text(self) -> str:
        return "\n".join(self.rows)


def parse_map(text: str) -> GridMap:
    """Parse newline-separated rows of ``S/F/H/G`` into a validated map.

    Blank lines and surrounding whitespace are ignored.
    """
    rows = [line.strip() for line in text.splitlines()]
    return GridMap(tuple(r for r in rows if r))


def load_map(name_or_path: str | Path) -> GridMap:
    """Return a built-in map by name, or parse a map file."""
    if str(name_or_path) in BUILTIN_MAPS:
        return GridMap(BUILTIN_MAPS[str(name_or_path)])
    return parse_map(Path(name_or_path).read_text())


@dataclass(frozen=True)
class EnvConfig:
    map: GridMap = field(default_factory=lambda: load_map("frozenlake8x8"))
    slip: float = 2.0 / 3.0
    hole_reward: float = -1.0
    goal_reward: float = 1.0
    step_reward: float = 0.0
    max_episode_steps: int = 200

    def __post_init__(self):
        if not 0.0 <= self.slip <= 1.0:
            raise ValueError(f"slip must lie in [0, 1], got {self.slip}")
        if self.max_episode_steps < 1:
            raise ValueError("max_episode_steps must be >= 1")


@dataclass(frozen=True)
class EnvState:
    position: int
    steps_taken: int = 0
    terminal: bool = False


class GridWorld:
    """Transition model and sampler for an :class:`EnvConfig`.

    The move table ``next_state[s, executed_action]`` and the reward of
    landing on each tile are precomputed, so :meth:`step` is a couple of
    lookups plus one uniform draw.
    """

    def __init__(self, config: EnvConfig):
        self.config = config
        gmap = config.map
        self.n_states = gmap.n_states
        self.n_actions = N_ACTIONS
        self.start = gmap.start
        self.next_state = np.empty((self.n_states, N_ACTIONS), dtype=np.int64)
        for s in range(self.n_states):
            r, c = divmod(s, gmap.width)
            for a, (dr, dc) in _MOVES.items():
                rr, cc = r + dr, c + dc
                if 0 <= rr < gmap.height and 0 <= cc < gmap.width:
                    self.next_state[s, a] = rr * gmap.width + cc
                else:
                    self.next_state[s, a] = s
        tiles = "".join(gmap.rows)
        self.tile_terminal = np.array([ch in "HG" for ch in tiles])
        self.tile_reward = np.array(
            [
                config.hole_reward if ch == "H" else config.goal_reward if ch == "G" else config.step_reward
                for ch in tiles
            ]
        )
        self.nonterminal_states = np.flatnonzero(~self.tile_terminal)
        # python-level copies for the hot path
        self._next = self.next_state.tolist()
        self._reward = self.tile_reward.tolist()
        self.terminal_of = self.tile_terminal.tolist()
        self._p_intended = 1.0 - config.slip
        self._p_right = 1.0 - config.slip / 2.0

    def reset(self) -> EnvState:
        return EnvState(self.start, 0, False)

    def resolve(self, action: int, u: float) -> int:
        """Map a uniform draw ``u`` in [0, 1) to the executed action."""
        if u < self._p_intended:
            return action
        if u < self._p_right:
            return (action + 1) % 4
        return (action + 3) % 4

    def resolve_many(self, action: int, u: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`resolve` over an array of uniform draws."""
        return np.where(u < self._p_intended, action, np.where(u < self._p_right, (action + 1) % 4, (action + 3) % 4))

    def move(self, position: int, action: int, u: float) -> int:
        """Next position for ``action`` at ``position`` given one uniform draw."""
        return self._next[position][self.resolve(action, u)]

    def step(self, state: EnvState, action: int, rng: np.random.Generator) -> tuple[EnvState, float, bool]:
        if state.terminal:
            raise RuntimeError("cannot step a terminal state; call reset()")
        if action not in ACTIONS:
            raise ValueError(f"unknown action {action!r}")
        executed = self.resolve(action, rng.random())
        s_next = self._next[state.position][executed]
        steps = state.steps_taken + 1
        terminal = self.terminal_of[s_next] or steps >= self.config.max_episode_steps
        return EnvState(s_next, steps, terminal), self._reward[s_next], terminal

    def outcomes(self, s: int, a: int) -> list[tuple[float, int]]:
        """Probability-weighted resolved moves ``[(p, s_next), ...]`` for ``(s, a)``.

        Order is intended, right, left; entries are not merged, so a wall
        hit by two of them shows up twice.
        """
        slip = self.config.slip
        return [
            (1.0 - slip, int(self.next_state[s, a])),
            (slip / 2.0, int(self.next_state[s, right_of(a)])),
            (slip / 2.0, int(self.next_state[s, left_of(a)])),
        ]

    def expected_reward(self, s: int, a: int) -> float:
        if self.terminal_of[s]:
            raise ValueError(f"state {s} is terminal")
        slip = self.config.slip
        r_int = self._reward[self._next[s][a]]
        r_right = self._reward[self._next[s][right_of(a)]]
        r_left = self._reward[self._next[s][left_of(a)]]
        return slip / 2.0 * r_right + slip / 2.0 * r_left + (1.0 - slip) * r_int

    def value_iteration(self, gamma: float, tol: float = 1e-12, max_iter: int = 100_000) -> np.ndarray:
        """Optimal action values ``Q*[s, a]`` ignoring the episode step cap."""
        q = np.zeros((self.n_states, N_ACTIONS))
        for _ in range(max_iter):
            v = np.where(self.tile_terminal, 0.0, q.max(axis=1))
            new = np.zeros_like(q)
            for s in self.nonterminal_states:
                for a in ACTIONS:
                    new[s, a] = sum(p * (self.tile_reward[s2] + gamma * v[s2]) for p, s2 in self.outcomes(s, a))
            if np.max(np.abs(new - q)) < tol:
                return new
            q = new
        return q
