"""Command-line entry point.

Subcommands write CSV files (``.`` decimal separator, ``\\n`` line endings,
UTF-8) and a ``manifest.json`` echoing the configuration, which is written
before any long computation starts.

Exit codes: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .envs import make_env
from .gesp import MonotoneTransform, parse_stopping
from .harness import (
    ExperimentConfig,
    evaluation_ratio,
    fmt_float,
    read_runs_csv,
    run_experiment,
    write_runs_csv,
)
from .replay import (
    DEFAULT_FRACTIONS,
    read_archive,
    record_archive,
    replay_report,
    write_archive,
    write_replay_report,
)
from .stats import compare_trajectories, quartiles, write_comparison_csv

log = logging.getLogger("gespkit")


class UsageError(Exception):
    pass


def _fractions(text: str) -> list:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad fraction list {text!r}")
    if not values or any(not 0.0 <= v <= 1.0 for v in values):
        raise argparse.ArgumentTypeError("fractions must be in [0, 1]")
    return values


def _default_seed() -> int:
    raw = os.environ.get("GESP_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"GESP_SEED must be an integer, got {raw!r}")


def _add_experiment_flags(p: argparse.ArgumentParser, seed_default: int, stopping: bool = True) -> None:
    p.add_argument("--env", required=True, help="cartpole, pendulum or ramp:<reward>:<t_max>")
    if stopping:
        p.add_argument("--stopping", default="gesp",
                       help="standard | gesp | problem:<criteria> | composite:<criteria>")
        p.add_argument("--t-grace", type=float, default=0.2, help="grace period as a fraction of t_max")
        p.add_argument("--offset", type=float, default=None,
                       help="enable the monotone transform with this per-step offset")
    p.add_argument("--budget", type=int, required=True, help="environment steps per repetition")
    p.add_argument("--reps", type=int, default=30)
    p.add_argument("--seed", type=int, default=seed_default)
    p.add_argument("--grid", type=int, default=100, help="number of budget checkpoints")
    p.add_argument("--experiment-id", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)


def build_parser(seed_default: int = 0) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gespkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="key=value file; explicit flags take precedence")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run repetitions and write runs.csv")
    _add_experiment_flags(p, seed_default)

    p = sub.add_parser("compare", help="pointwise comparison of two run directories")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep-tgrace", help="one run group per grace fraction")
    _add_experiment_flags(p, seed_default, stopping=False)
    p.add_argument("--fractions", type=_fractions, default=[0.0, 0.05, 0.2, 0.5, 1.0])

    p = sub.add_parser("record-archive", help="record full traces without early stopping")
    _add_experiment_flags(p, seed_default, stopping=False)

    p = sub.add_parser("replay", help="replay an archive under several grace values")
    p.add_argument("--archive", required=True)
    p.add_argument("--fractions", type=_fractions, default=list(DEFAULT_FRACTIONS))
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="tidy long-format summary of run directories")
    p.add_argument("--in", dest="inputs", action="append", required=True)
    p.add_argument("--out", required=True)
    return parser


def _config_argv(argv: list) -> list:
    """Turn the ``--config`` file into flags placed before the explicit ones
    (argparse keeps the last occurrence, so explicit flags win)."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return argv
    path = Path(known.config)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}")
    # subcommand must come first so the injected flags reach its parser
    commands = {"run", "compare", "sweep-tgrace", "record-archive", "replay", "report"}
    pos = next((i for i, a in enumerate(argv) if a in commands), None)
    if pos is None:
        return argv
    injected = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        injected += ["--" + key.strip().replace("_", "-"), value.strip()]
    return argv[: pos + 1] + injected + argv[pos + 1:]


def _experiment_config(args, stopping_text: str, t_grace: float, parser) -> ExperimentConfig:
    try:
        env = make_env(args.env)
        stopping = parse_stopping(stopping_text, t_grace)
        transform = MonotoneTransform(args.offset, True) if getattr(args, "offset", None) is not None else MonotoneTransform()
        cfg = ExperimentConfig(
            env_id=args.env,
            stopping=stopping,
            budget_T=args.budget,
            repetitions=args.reps,
            base_seed=args.seed,
            sample_grid=args.grid,
            experiment_id=args.experiment_id,
            transform=transform,
        )
        cfg.validate(env)
    except ValueError as exc:
        parser.error(str(exc))
    return cfg


def _write_manifest(out: Path, command: str, payload: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"tool": "gespkit", "version": __version__, "command": command, **payload}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_run(args, parser) -> int:
    cfg = _experiment_config(args, args.stopping, args.t_grace, parser)
    out = Path(args.out)
    _write_manifest(out, "run", {"config": cfg.as_dict(), "jobs": args.jobs})
    summaries = run_experiment(cfg, jobs=args.jobs)
    write_runs_csv(out / "runs.csv", cfg.experiment_id, summaries)
    log.info("wrote %s", out / "runs.csv")
    return 0


def cmd_compare(args, parser) -> int:
    a = read_runs_csv(_existing(args.a) / "runs.csv")
    b = read_runs_csv(_existing(args.b) / "runs.csv")
    if a.budgets != b.budgets:
        raise ValueError("checkpoint grids of the two run directories differ")
    out = Path(args.out)
    _write_manifest(out, "compare", {"a": str(args.a), "b": str(args.b), "alpha": args.alpha})
    rows = compare_trajectories(a.best_matrix(), b.best_matrix(), a.budgets, args.alpha)
    write_comparison_csv(out / "comparison.csv", rows)

    started_a = [a.started[r] for r in a.reps]
    started_b = [b.started[r] for r in b.reps]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["checkpoint_budget", "ratio"])
    for budget, ratio in evaluation_ratio(started_a, started_b, a.budgets):
        w.writerow([budget, fmt_float(ratio)])
    (out / "ratio.csv").write_text(buf.getvalue(), encoding="utf-8", newline="")
    n_sig = sum(r.significant for r in rows)
    log.info("%d of %d checkpoints significant at alpha=%g", n_sig, len(rows), args.alpha)
    return 0


def cmd_sweep(args, parser) -> int:
    out = Path(args.out)
    configs = [
        _experiment_config(args, "gesp", frac, parser) for frac in args.fractions
    ]
    _write_manifest(out, "sweep-tgrace", {"configs": [c.as_dict() for c in configs], "jobs": args.jobs})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["grace_fraction", "rep", "final_best"])
    for frac, cfg in zip(args.fractions, configs):
        for s in run_experiment(cfg, jobs=args.jobs):
            w.writerow([fmt_float(frac), s.rep, fmt_float(s.final_best)])
    (out / "sweep.csv").write_text(buf.getvalue(), encoding="utf-8", newline="")
    return 0


def cmd_record_archive(args, parser) -> int:
    cfg = _experiment_config(args, "standard", 1.0, parser)
    out = Path(args.out)
    _write_manifest(out, "record-archive", {"config": cfg.as_dict()})
    archive = record_archive(cfg)
    write_archive(archive, out)
    return 0


def cmd_replay(args, parser) -> int:
    archive = read_archive(args.archive)
    out = Path(args.out)
    _write_manifest(out, "replay", {"archive": str(args.archive), "fractions": args.fractions})
    write_replay_report(out / "replay_report.csv", replay_report(archive, args.fractions))
    return 0


def cmd_report(args, parser) -> int:
    tables = [(str(d), read_runs_csv(_existing(d) / "runs.csv")) for d in args.inputs]
    out = Path(args.out)
    _write_manifest(out, "report", {"inputs": [str(d) for d in args.inputs]})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["group", "experiment_id", "checkpoint_budget", "metric", "statistic", "value"])
    for group, table in tables:
        for metric, cols in (("best_objective", table.best), ("evaluations_started", table.started),
                             ("evaluations_full", table.full)):
            for j, budget in enumerate(table.budgets):
                values = [cols[r][j] for r in table.reps if cols[r][j] is not None]
                med, q25, q75 = quartiles(values)
                for stat, v in (("median", med), ("q25", q25), ("q75", q75)):
                    w.writerow([group, table.experiment_id, budget, metric, stat, fmt_float(v)])
    (out / "report.csv").write_text(buf.getvalue(), encoding="utf-8", newline="")
    return 0


def _existing(path) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise FileNotFoundError(f"directory {p} does not exist")
    return p


COMMANDS = {
    "run": cmd_run,
    "compare": cmd_compare,
    "sweep-tgrace": cmd_sweep,
    "record-archive": cmd_record_archive,
    "replay": cmd_replay,
    "report": cmd_report,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        seed_default = _default_seed()
        argv = _config_argv(argv)
    except UsageError as exc:
        print(f"gespkit: error: {exc}", file=sys.stderr)
        return 2
    parser = build_parser(seed_default)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, parser)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (OSError, ValueError) as exc:
        print(f"gespkit: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
