"""Experiment definitions, seeded multi-repetition runs, and aggregation."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agent import AgentConfig, DQNAgent, RngStreams, epsilon_at
from ._version import __version__
from .gridworld import BUILTIN_MAPS, EnvConfig, GridWorld, load_map, parse_map
from .interpolation import InterpolationConfig
from .qfunction import NumericalError
from .replay import InterpolatedReplay, ReplayMemory, TransitionDict
from .stats import descriptive

WINDOW = 100
RUN_COLUMNS = (
    "run_seed",
    "episode",
    "reward",
    "moving_avg_100",
    "epsilon",
    "real_buffer_size",
    "synthetic_buffer_size",
)
AGGREGATE_COLUMNS = ("episode", "mean", "sd")


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


@dataclass(frozen=True)
class ReplayConfig:
    kind: str = "interpolated"  # or "vanilla"
    s_er: int = 100_000
    s_ier: int = 100_000
    s_synthetic: int = 20_000

    def __post_init__(self):
        if self.kind not in ("interpolated", "vanilla"):
            raise ValueError(f"replay.kind must be 'interpolated' or 'vanilla', got {self.kind!r}")


METRICS = ("goal", "reward")


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment constellation.

    ``metric`` selects what the per-episode ``reward`` series records:
    ``"goal"`` is 1 for an episode that ends on a goal tile and 0 otherwise
    (the stock FrozenLake reward, whatever ``env.hole_reward`` trains with);
    ``"reward"`` is the undiscounted sum of the training rewards.
    """

    label: str = "experiment"
    episodes: int = 1000
    repetitions: int = 20
    base_seed: int = 0
    metric: str = "goal"
    agent: AgentConfig = field(default_factory=AgentConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    replay: ReplayConfig = field(default_factory=ReplayConfig)
    interpolation: InterpolationConfig = field(default_factory=InterpolationConfig)

    def __post_init__(self):
        if self.episodes < 1 or self.repetitions < 1:
            raise ValueError("episodes and repetitions must be >= 1")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}, got {self.metric!r}")

    def with_(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class RunResult:
    run_seed: int
    episode_rewards: list[float]
    epsilons: list[float]
    buffer_sizes: list[tuple[int, int]]
    steps: list[int] = field(default_factory=list)
    error: str | None = None

    def __post_init__(self):
        self.moving_avg_100 = moving_average(self.episode_rewards)

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def overall_mean(self) -> float:
        return float(np.mean(self.episode_rewards)) if self.episode_rewards else float("nan")


def moving_average(rewards, window: int = WINDOW) -> list[float]:
    """Trailing mean over up to ``window`` episodes, partial at the start."""
    x = np.asarray(rewards, dtype=np.float64)
    if len(x) == 0:
        return []
    csum = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, len(x) + 1)
    lo = np.maximum(0, idx - window)
    return ((csum[idx] - csum[lo]) / (idx - lo)).tolist()


def solved_at(result: RunResult, threshold: float = 0.78, window: int = WINDOW) -> int | None:
    """First episode whose full trailing window averages at least ``threshold``."""
    for i in range(window - 1, len(result.moving_avg_100)):
        if result.moving_avg_100[i] >= threshold:
            return i
    return None


def derive_seed(base_seed: int, repetition: int) -> int:
    """64-bit run seed; distinct repetitions are distinct spawn keys."""
    seq = np.random.SeedSequence(base_seed, spawn_key=(repetition,))
    return int(seq.generate_state(1, np.uint64)[0])


def build_agent(cfg: ExperimentConfig, run_seed: int, **agent_kwargs) -> DQNAgent:
    world = GridWorld(cfg.env)
    streams = RngStreams.from_seed(run_seed)
    rc = cfg.replay
    if rc.kind == "vanilla":
        return DQNAgent(world, cfg.agent, ReplayMemory(rc.s_er), streams, **agent_kwargs)
    replay = InterpolatedReplay(rc.s_er, rc.s_ier, rc.s_synthetic)
    return DQNAgent(world, cfg.agent, replay, streams, TransitionDict(), cfg.interpolation, **agent_kwargs)


def run_single(cfg: ExperimentConfig, run_seed: int, **agent_kwargs) -> RunResult:
    """One repetition; ``agent_kwargs`` pass through to :class:`DQNAgent` (e.g. ``on_interpolation``)."""
    agent = build_agent(cfg, run_seed, **agent_kwargs)
    rewards, epsilons, sizes, steps = [], [], [], []
    try:
        for _ in range(cfg.episodes):
            rec = agent.run_episode()
            rewards.append(float(rec.reached_goal) if cfg.metric == "goal" else rec.total_reward)
            epsilons.append(rec.epsilon_at_start)
            sizes.append((rec.real_buffer_size, rec.synthetic_buffer_size))
            steps.append(rec.steps)
    except NumericalError as exc:
        return RunResult(run_seed, rewards, epsilons, sizes, steps, error=str(exc))
    return RunResult(run_seed, rewards, epsilons, sizes, steps)


def _run_job(args):
    return run_single(*args)


def run_experiment(cfg: ExperimentConfig, parallelism: int = 1) -> list[RunResult]:
    """All repetitions of ``cfg``, ordered by repetition index."""
    jobs = [(cfg, derive_seed(cfg.base_seed, i)) for i in range(cfg.repetitions)]
    if parallelism <= 1 or len(jobs) == 1:
        return [_run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(_run_job, jobs))


@dataclass
class Aggregate:
    mean: np.ndarray
    sd: np.ndarray
    overall_mean: float
    overall_sd: float
    n_runs: int


def aggregate(results: list[RunResult]) -> Aggregate:
    """Across-repetition statistics of successful runs.

    ``mean``/``sd`` are per-episode over the moving-average curves.
    ``overall_mean`` pools every raw episode reward; ``overall_sd`` pools every
    moving-average value, which is the spread the learning curves show.
    """
    ok = [r for r in results if not r.failed]
    if not ok:
        raise ValueError("no successful runs to aggregate")
    lengths = {len(r.episode_rewards) for r in ok}
    if len(lengths) != 1:
        raise ValueError(f"ragged runs: episode counts {sorted(lengths)}")
    curves = np.array([r.moving_avg_100 for r in ok])
    rewards = np.array([r.episode_rewards for r in ok])
    sd = curves.std(axis=0, ddof=1) if len(ok) > 1 else np.zeros(curves.shape[1])
    return Aggregate(
        mean=curves.mean(axis=0),
        sd=sd,
        overall_mean=float(rewards.mean()),
        overall_sd=descriptive(curves.ravel())["sd"],
        n_runs=len(ok),
    )


# -- built-in grid ----------------------------------------------------------

EXPERIMENTS = {1: (500, 1000), 2: (750, 1000), 3: (1000, 1300)}  # t_exploration, episodes
SYNTHETIC_SIZES = (20_000, 100_000)
START_INTERPOLATION = (250, 500, 1000)


def grid_dirname(experiment: int, s_synthetic: int, c_start: int) -> str:
    return f"exp{experiment}_s{s_synthetic}_c{c_start}"


def experiment_configs(experiment: int, base: ExperimentConfig | None = None) -> list[ExperimentConfig]:
    """Baseline plus the six interpolated variants of one experiment row."""
    base = base or ExperimentConfig()
    t_exploration, episodes = EXPERIMENTS[experiment]
    agent = dataclasses.replace(base.agent, t_exploration=t_exploration)
    common = dict(agent=agent, episodes=episodes)
    out = [
        base.with_(
            label=grid_dirname(experiment, 0, 0),
            replay=dataclasses.replace(base.replay, kind="vanilla", s_synthetic=0),
            interpolation=InterpolationConfig(0, enabled=False),
            **common,
        )
    ]
    for s_syn in SYNTHETIC_SIZES:
        for c_start in START_INTERPOLATION:
            out.append(
                base.with_(
                    label=grid_dirname(experiment, s_syn, c_start),
                    replay=dataclasses.replace(base.replay, kind="interpolated", s_synthetic=s_syn),
                    interpolation=InterpolationConfig(c_start, enabled=True),
                    **common,
                )
            )
    return out


def builtin_grid(base: ExperimentConfig | None = None) -> list[ExperimentConfig]:
    return [c for exp in EXPERIMENTS for c in experiment_configs(exp, base)]


# -- config files -----------------------------------------------------------

_SECTIONS = {"agent": AgentConfig, "env": EnvConfig, "replay": ReplayConfig, "interpolation": InterpolationConfig}


def _parse_scalar(key: str, text: str, like):
    text = text.strip()
    try:
        if isinstance(like, bool):
            if text.lower() not in ("true", "false"):
                raise ValueError(text)
            return text.lower() == "true"
        if isinstance(like, int):
            return int(text.replace("_", ""))
        if isinstance(like, float):
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {type(like).__name__}") from None


def config_to_dict(cfg: ExperimentConfig) -> dict:
    flat = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if f.name in _SECTIONS:
            for sub in dataclasses.fields(value):
                v = getattr(value, sub.name)
                if f.name == "env" and sub.name == "map":
                    map_name = next((k for k in BUILTIN_MAPS if load_map(k) == v), None)
                    v = map_name if map_name is not None else v.to_text().replace("\n", "/")
                flat[f"{f.name}.{sub.name}"] = v
        else:
            flat[f.name] = value
    return flat


def dump_config(cfg: ExperimentConfig) -> str:
    """Flat ``key = value`` text; ``env.map`` rows are joined with ``/``."""
    lines = []
    for k, v in config_to_dict(cfg).items():
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    base = base or ExperimentConfig()
    top: dict = {}
    sections: dict[str, dict] = {name: {} for name in _SECTIONS}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        section, _, name = key.rpartition(".")
        if section:
            if section not in _SECTIONS:
                raise ConfigError(f"{key}: unknown section {section!r}")
            owner = getattr(base, section)
            if name not in {f.name for f in dataclasses.fields(owner)}:
                raise ConfigError(f"{key}: unknown field")
            if section == "env" and name == "map":
                try:
                    sections[section][name] = _parse_map_value(value)
                except (ValueError, OSError) as exc:
                    raise ConfigError(f"{key}: {exc}") from None
            else:
                sections[section][name] = _parse_scalar(key, value, getattr(owner, name))
        else:
            if name not in {f.name for f in dataclasses.fields(base)} or name in _SECTIONS:
                raise ConfigError(f"{key}: unknown field")
            top[name] = _parse_scalar(key, value, getattr(base, name))
    try:
        for name, changes in sections.items():
            if changes:
                top[name] = dataclasses.replace(getattr(base, name), **changes)
        return dataclasses.replace(base, **top)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _parse_map_value(value: str):
    if value in BUILTIN_MAPS:
        return load_map(value)
    if "/" in value and set(value) <= set("SFHG/"):
        return parse_map(value.replace("/", "\n"))
    return load_map(value)


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()


# -- CSV --------------------------------------------------------------------


def write_runs_csv(path: str | Path, results: list[RunResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RUN_COLUMNS)
        for res in results:
            if res.failed:
                continue
            for i, (rew, ma, eps, (n_real, n_syn)) in enumerate(
                zip(res.episode_rewards, res.moving_avg_100, res.epsilons, res.buffer_sizes)
            ):
                w.writerow([res.run_seed, i, repr(rew), repr(ma), repr(eps), n_real, n_syn])


def read_runs_csv(path: str | Path) -> list[RunResult]:
    """Rebuild :class:`RunResult` objects, one per ``run_seed``, in file order."""
    runs: dict[int, RunResult] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != RUN_COLUMNS:
            raise ValueError(f"{path}: expected columns {','.join(RUN_COLUMNS)}, got {header}")
        rows: dict[int, list] = {}
        for row in reader:
            rows.setdefault(int(row[0]), []).append(row)
    for seed, rs in rows.items():
        runs[seed] = RunResult(
            seed,
            [float(r[2]) for r in rs],
            [float(r[4]) for r in rs],
            [(int(r[5]), int(r[6])) for r in rs],
        )
    return list(runs.values())


def write_aggregate_csv(path: str | Path, agg: Aggregate) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AGGREGATE_COLUMNS)
        for i, (m, s) in enumerate(zip(agg.mean, agg.sd)):
            w.writerow([i, repr(float(m)), repr(float(s))])


def write_manifest(path: str | Path, cfg: ExperimentConfig, results: list[RunResult]) -> None:
    doc = {
        "config_hash": config_hash(cfg),
        "base_seed": cfg.base_seed,
        "repetitions": cfg.repetitions,
        "artifact_version": __version__,
        "label": cfg.label,
        "config": config_to_dict(cfg),
        "run_seeds": [r.run_seed for r in results],
        "failed": [{"run_seed": r.run_seed, "error": r.error} for r in results if r.failed],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def save_experiment(out_dir: str | Path, cfg: ExperimentConfig, results: list[RunResult]) -> Aggregate | None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_runs_csv(out / "runs.csv", results)
    write_manifest(out / "manifest.json", cfg, results)
    if any(not r.failed for r in results):
        agg = aggregate(results)
        write_aggregate_csv(out / "aggregate.csv", agg)
        return agg
    return None


__all__ = [
    "Aggregate",
    "ConfigError",
    "ExperimentConfig",
    "ReplayConfig",
    "RunResult",
    "aggregate",
    "builtin_grid",
    "derive_seed",
    "epsilon_at",
    "experiment_configs",
    "load_config",
    "moving_average",
    "parse_config",
    "run_experiment",
    "run_single",
    "solved_at",
]
