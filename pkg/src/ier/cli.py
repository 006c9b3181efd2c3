"""Command-line entry point: ``ier {run,grid,compare,env-check}``.

Exit status is 0 on success, 1 on a runtime failure (including a failed
check or a failed repetition) and 2 on a usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._version import __version__
from .experiment import (
    ConfigError,
    ExperimentConfig,
    RunResult,
    aggregate,
    builtin_grid,
    EXPERIMENTS,
    experiment_configs,
    load_config,
    read_runs_csv,
    run_experiment,
    save_experiment,
)
from .gridworld import ACTIONS, EnvConfig, GridWorld, MapError, load_map
from .stats import ALTERNATIVES, mann_whitney_u

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
SIGNIFICANCE = 0.05
COMPARE_COLUMNS = ("label", "mean", "sd", "p", "significant")
ENV_CHECK_COLUMNS = ("s", "a", "empirical", "analytic", "gap", "se", "intended_freq", "ok")


class UsageError(Exception):
    pass


def _log(args, msg: str) -> None:
    if not getattr(args, "quiet", False):
        print(msg, file=sys.stderr, flush=True)


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"--out {path}: {exc.strerror or exc}") from None
    return out


def _base_config(args) -> ExperimentConfig:
    if args.config is None:
        return ExperimentConfig()
    if not Path(args.config).is_file():
        raise UsageError(f"--config {args.config}: no such file")
    return load_config(args.config)


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if args.seed is not None:
        changes["base_seed"] = args.seed
    if args.episodes is not None:
        changes["episodes"] = args.episodes
    if getattr(args, "repetitions", None) is not None:
        changes["repetitions"] = args.repetitions
    try:
        return cfg.with_(**changes) if changes else cfg
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _summary(label: str, results: list[RunResult], seconds: float) -> str:
    ok = [r for r in results if not r.failed]
    if not ok:
        return f"{label}: all {len(results)} runs failed ({seconds:.0f}s)"
    agg = aggregate(ok)
    failed = len(results) - len(ok)
    tail = f", {failed} failed" if failed else ""
    return f"{label}: mean {agg.overall_mean:.4f} sd {agg.overall_sd:.4f} over {agg.n_runs} runs{tail} ({seconds:.0f}s)"


def _execute(cfg: ExperimentConfig, out: Path, parallelism: int, args) -> bool:
    """Run and save one config; ``True`` when every repetition succeeded."""
    t0 = time.perf_counter()
    results = run_experiment(cfg, parallelism)
    save_experiment(out, cfg, results)
    _log(args, _summary(cfg.label, results, time.perf_counter() - t0))
    for r in results:
        if r.failed:
            _log(args, f"  run {r.run_seed} failed: {r.error}")
    return not any(r.failed for r in results)


def cmd_run(args) -> int:
    cfg = _apply_overrides(_base_config(args), args)
    out = _out_dir(args.out)
    return EXIT_OK if _execute(cfg, out, args.parallelism, args) else EXIT_RUNTIME


def cmd_grid(args) -> int:
    base = _base_config(args)
    out = _out_dir(args.out)
    if args.experiments:
        configs = [c for e in args.experiments for c in experiment_configs(e, base)]
    else:
        configs = builtin_grid(base)
    configs = [_apply_overrides(c, args) for c in configs]
    all_ok = True
    for cfg in configs:
        try:
            all_ok &= _execute(cfg, out / cfg.label, args.parallelism, args)
        except Exception as exc:  # keep going; completed configs stay on disk
            all_ok = False
            _log(args, f"{cfg.label}: failed: {exc}")
    return EXIT_OK if all_ok else EXIT_RUNTIME


# -- compare ----------------------------------------------------------------


@dataclass(frozen=True)
class ComparisonRow:
    label: str
    mean: float
    sd: float
    p: float
    significant: bool


def _label_for(path: Path) -> str:
    return path.parent.name if path.name == "runs.csv" else path.stem


def _runs_path(arg: str) -> Path:
    p = Path(arg)
    if p.is_dir():
        p = p / "runs.csv"
    if not p.is_file():
        raise UsageError(f"{arg}: no runs.csv found")
    return p


def _load_runs(path: Path) -> list[RunResult]:
    try:
        results = read_runs_csv(path)
    except (ValueError, IndexError) as exc:
        raise UsageError(f"{path}: schema mismatch: {exc}") from None
    if not results:
        raise UsageError(f"{path}: no runs")
    return results


def compare(
    baseline: tuple[str, list[RunResult]],
    variants: list[tuple[str, list[RunResult]]],
    alternative: str = "two-sided",
) -> list[ComparisonRow]:
    """Report rows: the baseline first, then every variant tested against it.

    The test runs on per-repetition overall means. A row is flagged when
    ``p < 0.05`` and its mean exceeds the baseline's.
    """
    base_label, base_runs = baseline
    base_samples = [r.overall_mean for r in base_runs]
    base_agg = aggregate(base_runs)
    rows = []
    for label, runs in [baseline, *variants]:
        try:
            agg = aggregate(runs)
        except ValueError as exc:
            raise UsageError(f"{label}: {exc}") from None
        p = mann_whitney_u([r.overall_mean for r in runs], base_samples, alternative).p_value
        flagged = p < SIGNIFICANCE and agg.overall_mean > base_agg.overall_mean
        rows.append(ComparisonRow(label, agg.overall_mean, agg.overall_sd, p, flagged))
    return rows


def format_report(rows: list[ComparisonRow]) -> str:
    width = max(len("label"), *(len(r.label) for r in rows))
    lines = [f"{'label':<{width}}  {'mean':>8}  {'sd':>8}  {'p':>10}"]
    for r in rows:
        mark = "  *" if r.significant else ""
        lines.append(f"{r.label:<{width}}  {r.mean:8.4f}  {r.sd:8.4f}  {r.p:10.4g}{mark}")
    lines.append(f"* p < {SIGNIFICANCE} and mean above the baseline")
    return "\n".join(lines) + "\n"


def write_report_csv(path: str | Path, rows: list[ComparisonRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COMPARE_COLUMNS)
        for r in rows:
            w.writerow([r.label, repr(r.mean), repr(r.sd), repr(r.p), int(r.significant)])


def cmd_compare(args) -> int:
    base_path = _runs_path(args.baseline)
    baseline = (_label_for(base_path), _load_runs(base_path))
    variants = []
    for v in args.variants:
        path = _runs_path(v)
        variants.append((_label_for(path), _load_runs(path)))
    rows = compare(baseline, variants, args.alternative)
    report = format_report(rows)
    if not args.quiet:
        sys.stdout.write(report)
    if args.out is not None:
        out = _out_dir(args.out)
        (out / "comparison.txt").write_text(report)
        write_report_csv(out / "comparison.csv", rows)
    return EXIT_OK


# -- env-check --------------------------------------------------------------


@dataclass(frozen=True)
class EnvCheckRow:
    s: int
    a: int
    empirical: float
    analytic: float
    gap: float
    se: float
    intended_freq: float
    ok: bool


def env_check(world: GridWorld, samples: int, seed: int = 0) -> list[EnvCheckRow]:
    """Monte-Carlo expected reward of every nonterminal state-action pair.

    Each pair draws from its own stream keyed by ``(seed, s, a)``, so a row
    does not depend on which other pairs were checked. A row passes when
    the gap to the analytic value is within three standard errors (a 1e-12
    slack absorbs rounding in the analytic sum).
    """
    if samples < 1:
        raise UsageError("--samples must be at least 1")
    rows = []
    for s in world.nonterminal_states.tolist():
        for a in ACTIONS:
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(s, a)))
            executed = world.resolve_many(a, rng.random(samples))
            rewards = world.tile_reward[world.next_state[s, executed]]
            empirical = float(rewards.mean())
            se = float(rewards.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
            analytic = world.expected_reward(s, a)
            gap = abs(empirical - analytic)
            freq = float(np.mean(executed == a))
            rows.append(EnvCheckRow(s, a, empirical, analytic, gap, se, freq, gap <= 3.0 * se + 1e-12))
    return rows


def cmd_env_check(args) -> int:
    try:
        env = EnvConfig(map=load_map(args.map), slip=args.slip)
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from None
    rows = env_check(GridWorld(env), args.samples, args.seed)
    n_bad = sum(not r.ok for r in rows)
    if not args.quiet:
        print(f"{'s':>3} {'a':>2} {'empirical':>10} {'analytic':>10} {'gap':>9} {'se':>9} {'intended':>9}")
        for r in rows:
            flag = "" if r.ok else "  FAIL"
            print(
                f"{r.s:3d} {r.a:2d} {r.empirical:10.5f} {r.analytic:10.5f} {r.gap:9.2e} {r.se:9.2e} "
                f"{r.intended_freq:9.4f}{flag}"
            )
        print(f"{len(rows) - n_bad}/{len(rows)} state-action pairs within 3 standard errors")
    if args.out is not None:
        out = _out_dir(args.out)
        with open(out / "env_check.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(ENV_CHECK_COLUMNS)
            for r in rows:
                w.writerow([*(repr(v) if isinstance(v, float) else v for v in dataclasses.astuple(r)[:-1]), int(r.ok)])
    return EXIT_OK if n_bad == 0 else EXIT_RUNTIME


# -- parser -----------------------------------------------------------------


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file (defaults apply when omitted)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override base_seed")
    p.add_argument("--episodes", type=_positive_int, help="override episodes per run")
    p.add_argument("--repetitions", type=_positive_int, help="override repetitions")
    p.add_argument("--parallelism", type=_positive_int, default=1, help="worker processes for repetitions")
    p.add_argument("--quiet", action="store_true", help="no progress output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ier", description="Interpolated experience replay experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment config")
    _experiment_flags(run)
    run.set_defaults(func=cmd_run)

    grid = sub.add_parser("grid", help="run the built-in 21-config grid")
    _experiment_flags(grid)
    grid.add_argument(
        "--experiments", type=int, nargs="+", choices=sorted(EXPERIMENTS), help="restrict to these experiment rows"
    )
    grid.set_defaults(func=cmd_grid)

    cmp_ = sub.add_parser("compare", help="test variants against a baseline")
    cmp_.add_argument("baseline", help="baseline runs.csv or its directory")
    cmp_.add_argument("variants", nargs="*", help="variant runs.csv files or directories")
    cmp_.add_argument("--alternative", choices=ALTERNATIVES, default="two-sided")
    cmp_.add_argument("--out", help="also write comparison.txt and comparison.csv here")
    cmp_.add_argument("--quiet", action="store_true")
    cmp_.set_defaults(func=cmd_compare)

    env = sub.add_parser("env-check", help="empirical vs analytic expected rewards")
    env.add_argument("--slip", type=float, default=2 / 3)
    env.add_argument("--samples", type=int, default=100_000)
    env.add_argument("--map", default="frozenlake8x8", help="built-in map name or map file")
    env.add_argument("--seed", type=int, default=0)
    env.add_argument("--out", help="also write env_check.csv here")
    env.add_argument("--quiet", action="store_true")
    env.set_defaults(func=cmd_env_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, ConfigError, MapError) as exc:
        print(f"ier {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"ier {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
