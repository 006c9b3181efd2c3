import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ier import experiment as ex
from ier.agent import AgentConfig
from ier.experiment import (
    ConfigError,
    ExperimentConfig,
    ReplayConfig,
    RunResult,
    aggregate,
    builtin_grid,
    config_hash,
    derive_seed,
    dump_config,
    experiment_configs,
    moving_average,
    parse_config,
    read_runs_csv,
    run_experiment,
    run_single,
    save_experiment,
    solved_at,
    write_aggregate_csv,
)
from ier.gridworld import EnvConfig, load_map, parse_map
from ier.interpolation import InterpolationConfig
from ier.qfunction import NumericalError

TINY = ExperimentConfig(
    label="tiny",
    episodes=30,
    repetitions=3,
    agent=AgentConfig(t_exploration=15, target_sync_interval=50, learn_start_size=50, minibatch_size=8),
    env=EnvConfig(map=load_map("frozenlake4x4")),
    replay=ReplayConfig(s_er=500, s_ier=500, s_synthetic=200),
)


def result(rewards, seed=0):
    n = len(rewards)
    return RunResult(seed, list(map(float, rewards)), [1.0] * n, [(0, 0)] * n)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from([0.0, 1.0, -1.0, 0.5]), min_size=1, max_size=300))
def test_moving_average_brute_force(rewards):
    ma = moving_average(rewards)
    for i, v in enumerate(ma):
        window = rewards[max(0, i - 99) : i + 1]
        assert v == pytest.approx(sum(window) / len(window), abs=1e-12)


def test_stored_moving_average_matches_rewards():
    res = run_single(TINY, 1)
    assert res.moving_avg_100 == moving_average(res.episode_rewards)


def test_solved_at():
    assert solved_at(result([1] * 150)) == 99
    assert solved_at(result([0] * 300)) is None
    assert solved_at(result([0] * 100 + [1] * 100), threshold=1.0) == 199
    # at 0.78 the window holds 78 ones first at episode 177
    assert solved_at(result([0] * 100 + [1] * 100)) == 177
    # a partial window never counts
    assert solved_at(result([1] * 99)) is None


def test_derive_seed_injective_and_stable():
    seeds = [derive_seed(0, i) for i in range(10_000)]
    assert len(set(seeds)) == len(seeds)
    assert derive_seed(0, 3) == seeds[3]
    assert derive_seed(1, 3) != seeds[3]


def test_aggregate_single_repetition():
    agg = aggregate([result([0, 1, 1, 0])])
    assert np.all(agg.sd == 0) and agg.n_runs == 1


def test_aggregate_two_constant_runs():
    agg = aggregate([result([0] * 5), result([1] * 5, 1)])
    assert np.allclose(agg.mean, 0.5)
    assert np.allclose(agg.sd, np.std([0, 1], ddof=1))
    assert agg.overall_mean == 0.5


def test_aggregate_permutation_invariant():
    rng = np.random.default_rng(0)
    runs = [result(rng.integers(0, 2, 50), i) for i in range(6)]
    a = aggregate(runs)
    b = aggregate(runs[::-1])
    np.testing.assert_allclose(a.mean, b.mean, rtol=0, atol=1e-15)
    assert a.overall_mean == pytest.approx(b.overall_mean, abs=1e-15)


def test_aggregate_ragged_raises():
    with pytest.raises(ValueError):
        aggregate([result([0] * 5), result([0] * 6)])


def test_aggregate_excludes_failed():
    bad = RunResult(9, [1.0], [1.0], [(0, 0)], error="boom")
    agg = aggregate([result([0] * 3), bad])
    assert agg.n_runs == 1


def test_run_is_deterministic():
    a, b = run_single(TINY, 11), run_single(TINY, 11)
    assert a.episode_rewards == b.episode_rewards and a.buffer_sizes == b.buffer_sizes


def test_goal_and_reward_metrics():
    goal = run_single(TINY.with_(metric="goal"), 2)
    reward = run_single(TINY.with_(metric="reward"), 2)
    # same trajectories; the goal series is the reward series with hole penalties zeroed
    assert goal.buffer_sizes == reward.buffer_sizes
    assert goal.episode_rewards == [float(r == 1.0) for r in reward.episode_rewards]
    assert set(goal.episode_rewards) <= {0.0, 1.0}


def test_numerical_failure_becomes_failed_run(monkeypatch):
    def explode(*a, **k):
        raise NumericalError("non-finite loss")

    monkeypatch.setattr("ier.agent.train_step", explode)
    res = run_single(TINY, 3)
    assert res.failed and "non-finite" in res.error


def test_vanilla_baseline_has_no_synthetic():
    res = run_single(TINY.with_(replay=dataclasses.replace(TINY.replay, kind="vanilla")), 4)
    assert all(n_syn == 0 for _, n_syn in res.buffer_sizes)


def test_grid_shape():
    grid = builtin_grid()
    assert len(grid) == 21
    labels = [c.label for c in grid]
    assert len(set(labels)) == 21
    for exp, (t_expl, episodes) in ex.EXPERIMENTS.items():
        row = experiment_configs(exp)
        assert row[0].label == f"exp{exp}_s0_c0" and row[0].replay.kind == "vanilla"
        assert not row[0].interpolation.enabled
        assert all(c.agent.t_exploration == t_expl and c.episodes == episodes for c in row)
        variants = {(c.replay.s_synthetic, c.interpolation.c_start_interpolation) for c in row[1:]}
        assert variants == {(s, c) for s in (20_000, 100_000) for c in (250, 500, 1000)}


def test_config_round_trip():
    for cfg in [ExperimentConfig(), TINY, TINY.with_(env=EnvConfig(map=parse_map("SFH\nFFG"), slip=0.25))]:
        assert parse_config(dump_config(cfg)) == cfg
    assert config_hash(TINY) == config_hash(parse_config(dump_config(TINY)))
    assert config_hash(TINY) != config_hash(TINY.with_(base_seed=1))


def test_config_text_features(tmp_path):
    mapfile = tmp_path / "m.txt"
    mapfile.write_text("SF\nHG\n")
    cfg = parse_config(
        f"""
        # comment line
        label = demo
        episodes = 1_000   # trailing comment
        agent.optimizer = lazy_adam
        interpolation.enabled = false
        env.map = {mapfile}
        """
    )
    assert cfg.label == "demo" and cfg.episodes == 1000
    assert cfg.agent.optimizer == "lazy_adam" and not cfg.interpolation.enabled
    assert cfg.env.map.rows == ("SF", "HG")


@pytest.mark.parametrize(
    "text, key",
    [
        ("agent.gamma = high", "agent.gamma"),
        ("agent.colour = 3", "agent.colour"),
        ("bogus.x = 1", "bogus.x"),
        ("nonsense = 1", "nonsense"),
        ("episodes = 0", "episodes"),
        ("env.map = SX/FG", "env.map"),
        ("env.map = /no/such/file", "env.map"),
        ("replay.kind = other", "replay.kind"),
    ],
)
def test_config_errors_name_the_field(text, key):
    with pytest.raises(ConfigError, match=key.split(".")[-1]):
        parse_config(text)


def test_csv_round_trip_reproduces_aggregate(tmp_path):
    results = run_experiment(TINY)
    save_experiment(tmp_path, TINY, results)
    again = read_runs_csv(tmp_path / "runs.csv")
    assert [r.episode_rewards for r in again] == [r.episode_rewards for r in results]
    write_aggregate_csv(tmp_path / "again.csv", aggregate(again))
    assert (tmp_path / "again.csv").read_bytes() == (tmp_path / "aggregate.csv").read_bytes()


def test_runs_csv_columns(tmp_path):
    save_experiment(tmp_path, TINY, run_experiment(TINY.with_(repetitions=1)))
    header = (tmp_path / "runs.csv").read_text().splitlines()[0]
    assert header == "run_seed,episode,reward,moving_avg_100,epsilon,real_buffer_size,synthetic_buffer_size"


def test_read_runs_csv_rejects_schema(tmp_path):
    p = tmp_path / "runs.csv"
    p.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError):
        read_runs_csv(p)


def test_parallelism_does_not_change_outputs(tmp_path):
    save_experiment(tmp_path / "serial", TINY, run_experiment(TINY, 1))
    save_experiment(tmp_path / "parallel", TINY, run_experiment(TINY, 2))
    for name in ("runs.csv", "aggregate.csv", "manifest.json"):
        assert (tmp_path / "serial" / name).read_bytes() == (tmp_path / "parallel" / name).read_bytes()


def test_disabled_interpolation_matches_vanilla(tmp_path):
    vanilla = TINY.with_(replay=dataclasses.replace(TINY.replay, kind="vanilla"))
    ier_off = TINY.with_(
        replay=dataclasses.replace(TINY.replay, s_synthetic=0), interpolation=InterpolationConfig(enabled=False)
    )
    save_experiment(tmp_path / "v", vanilla, run_experiment(vanilla))
    save_experiment(tmp_path / "i", ier_off, run_experiment(ier_off))
    assert (tmp_path / "v" / "runs.csv").read_bytes() == (tmp_path / "i" / "runs.csv").read_bytes()


def test_manifest_keys(tmp_path):
    import json

    save_experiment(tmp_path, TINY, run_experiment(TINY.with_(repetitions=2)))
    doc = json.loads((tmp_path / "manifest.json").read_text())
    assert {"config_hash", "base_seed", "repetitions", "artifact_version"} <= set(doc)
    assert doc["run_seeds"] == [derive_seed(0, 0), derive_seed(0, 1)]
