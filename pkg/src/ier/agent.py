"""DQN control loop over a linear Q-function."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .gridworld import GridWorld
from .interpolation import InterpolationConfig, SyntheticBatch, interpolate_step
from .qfunction import LinearQ, NumericalError, make_optimizer, sync_target, td_targets, train_step
from .replay import InterpolatedReplay, ReplayMemory, TransitionDict


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.95
    epsilon_start: float = 1.0
    epsilon_min: float = 0.05
    t_exploration: int = 500
    target_sync_interval: int = 300
    minibatch_size: int = 32
    learn_start_size: int = 300
    learning_rate: float = 0.0005
    optimizer: str = "adam"
    loss: str = "mse"
    init_scale: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0.0 <= self.epsilon_min <= self.epsilon_start <= 1.0:
            raise ValueError("need 0 <= epsilon_min <= epsilon_start <= 1")
        for name in ("t_exploration", "target_sync_interval", "minibatch_size", "learn_start_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass(frozen=True)
class EpisodeRecord:
    episode_index: int
    total_reward: float
    steps: int
    epsilon_at_start: float
    real_buffer_size: int
    synthetic_buffer_size: int
    reached_goal: bool = False


class RngStreams(NamedTuple):
    env: np.random.Generator
    action: np.random.Generator
    sample: np.random.Generator
    interp: np.random.Generator
    init: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int | np.random.SeedSequence) -> "RngStreams":
        seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        return cls(*(np.random.default_rng(child) for child in seq.spawn(len(cls._fields))))


def epsilon_at(cfg: AgentConfig, episode: int) -> float:
    if episode >= cfg.t_exploration:
        return cfg.epsilon_min
    frac = episode / cfg.t_exploration
    return cfg.epsilon_start - (cfg.epsilon_start - cfg.epsilon_min) * frac


def select_action(q: LinearQ, s: int, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy with uniform tie-breaking among maximal actions."""
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(q.n_actions))
    values = q.weights[s] + q.bias
    best = np.flatnonzero(values == values.max())
    if len(best) == 1:
        return int(best[0])
    return int(best[rng.integers(len(best))])


class DQNAgent:
    """Owns everything one run mutates: networks, optimizer, replay, streams.

    Pass ``tdict=None`` (and a :class:`ReplayMemory`) for the vanilla baseline;
    the interpolation path is then skipped entirely, including its draws.
    """

    def __init__(
        self,
        world: GridWorld,
        cfg: AgentConfig,
        replay: ReplayMemory | InterpolatedReplay,
        streams: RngStreams,
        tdict: TransitionDict | None = None,
        interpolation: InterpolationConfig | None = None,
        on_interpolation: Callable[[SyntheticBatch, TransitionDict], None] | None = None,
    ):
        self.world = world
        self.cfg = cfg
        self.replay = replay
        self.streams = streams
        self.tdict = tdict
        self.interpolation = interpolation or InterpolationConfig(enabled=False)
        self.on_interpolation = on_interpolation
        if tdict is not None and not isinstance(replay, InterpolatedReplay):
            raise TypeError("interpolation needs an InterpolatedReplay")
        self.q = LinearQ.uniform(world.n_states, world.n_actions, streams.init, cfg.init_scale)
        self.target_q = sync_target(self.q)
        self.optimizer = make_optimizer(cfg.optimizer, cfg.learning_rate)
        self.global_step = 0
        self.train_steps = 0
        self.target_syncs = 0
        self.episodes_done = 0
        self.last_loss = float("nan")
        self._synthesis_cache: dict = {}

    def _learn(self) -> None:
        batch = self.replay.sample_batch(self.cfg.minibatch_size, self.streams.sample)
        targets = td_targets(self.target_q, batch, self.cfg.gamma)
        try:
            self.last_loss = train_step(self.q, self.optimizer, batch, targets, self.cfg.loss)
        except NumericalError as exc:
            raise NumericalError(f"{exc} at global step {self.global_step}, episode {self.episodes_done}") from exc
        self.train_steps += 1

    def _interpolate(self) -> None:
        syn = interpolate_step(
            self.tdict, self.replay.n_real, self.interpolation, self.world, self.streams.interp, self._synthesis_cache
        )
        if self.on_interpolation is not None and syn.query_state is not None:
            self.on_interpolation(syn, self.tdict)
        if len(syn):
            self.replay.extend_synthetic(syn.batch)

    def run_episode(self) -> EpisodeRecord:
        """Play one episode, storing, interpolating and training after every step."""
        cfg = self.cfg
        world = self.world
        replay = self.replay
        tdict = self.tdict
        env_rng = self.streams.env
        action_rng = self.streams.action
        rewards = world.tile_reward.tolist()
        terminal_of = world.terminal_of
        epsilon = epsilon_at(cfg, self.episodes_done)
        max_steps = world.config.max_episode_steps
        s = world.start
        total = 0.0
        steps = 0
        reached_goal = False
        while True:
            a = select_action(self.q, s, epsilon, action_rng)
            s_next = world.move(s, a, env_rng.random())
            r = rewards[s_next]
            done = terminal_of[s_next]
            steps += 1
            total += r
            # the step cap ends the episode but is not an MDP terminal, so it still bootstraps
            replay.push_real(s, a, r, s_next, done)
            if tdict is not None:
                tdict.observe(s, a, r, s_next)
                self._interpolate()
            if len(replay) >= cfg.learn_start_size:
                self._learn()
            self.global_step += 1
            if self.global_step % cfg.target_sync_interval == 0:
                self.target_q = sync_target(self.q)
                self.target_syncs += 1
            s = s_next
            if done or steps >= max_steps:
                reached_goal = world.config.map.tile(s) == "G"
                break
        record = EpisodeRecord(
            self.episodes_done, total, steps, epsilon, replay.n_real, replay.n_synthetic, reached_goal
        )
        self.episodes_done += 1
        return record
