"""Interpolated experience replay for DQN on nondeterministic gridworlds."""
from ._version import __version__
from .agent import AgentConfig, DQNAgent, EpisodeRecord, RngStreams, epsilon_at, select_action
from .experiment import (
    ExperimentConfig,
    ReplayConfig,
    RunResult,
    aggregate,
    builtin_grid,
    run_experiment,
    run_single,
    solved_at,
)
from .gridworld import EnvConfig, EnvState, GridMap, GridWorld, load_map, parse_map
from .interpolation import InterpolationConfig, SyntheticBatch, expected_vs_average_gap, interpolate_step
from .qfunction import Adam, LinearQ, SGD, sync_target, td_targets, train_step
from .replay import Experience, InterpolatedReplay, ReplayMemory, TransitionDict
from .stats import descriptive, mann_whitney_u
