"""Budgeted experiment runner: attainment trajectories and evaluation ratios."""

from __future__ import annotations

import csv
import io
import logging
import math
import statistics
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .core import BudgetClock
from .envs import make_env
from .gesp import (
    BestReference,
    MonotoneTransform,
    StoppingSpec,
    evaluate_with_stopping,
    maybe_update_best,
    parse_stopping,
)
from .optimizer import CMAES, policy_dim, policy_for_env

log = logging.getLogger(__name__)

RUNS_COLUMNS = [
    "experiment_id",
    "rep",
    "checkpoint_budget",
    "best_objective",
    "evaluations_started",
    "evaluations_full",
]

INITIAL_SIGMA = 0.5


@dataclass
class ExperimentConfig:
    env_id: str
    stopping: StoppingSpec = field(default_factory=lambda: StoppingSpec("gesp", 0.2))
    budget_T: int = 100_000
    repetitions: int = 30
    base_seed: int = 0
    sample_grid: int = 100
    experiment_id: Optional[str] = None
    transform: MonotoneTransform = MonotoneTransform()

    def __post_init__(self):
        if isinstance(self.stopping, str):
            self.stopping = parse_stopping(self.stopping)
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.sample_grid < 1:
            raise ValueError("sample_grid must be >= 1")
        if self.experiment_id is None:
            self.experiment_id = self.env_id

    @property
    def t_grace_fraction(self) -> float:
        return self.stopping.t_grace_fraction

    def validate(self, env=None) -> None:
        env = env or make_env(self.env_id)
        if self.budget_T < env.t_max:
            raise ValueError(f"budget {self.budget_T} is smaller than t_max={env.t_max}")
        self.stopping.build(env.t_max)

    def checkpoints(self) -> list:
        """``sample_grid`` evenly spaced budget points ending at ``budget_T``."""
        return [
            int(math.floor(self.budget_T * k / self.sample_grid + 0.5))
            for k in range(1, self.sample_grid + 1)
        ]

    def as_dict(self) -> dict:
        return {
            "experiment_id": self.experiment_id,
            "env_id": self.env_id,
            "stopping": self.stopping.describe(),
            "t_grace_fraction": self.stopping.t_grace_fraction,
            "budget_T": self.budget_T,
            "repetitions": self.repetitions,
            "base_seed": self.base_seed,
            "sample_grid": self.sample_grid,
            "monotone_offset": self.transform.k if self.transform.enabled else None,
        }


@dataclass
class AttainmentSeries:
    """Best fully evaluated objective against cumulative budget.

    ``best`` holds ``None`` until the first full evaluation has finished.
    """

    budgets: list
    best: list
    started: list
    full: list

    def __post_init__(self):
        for prev, cur in zip(self.best, self.best[1:]):
            if prev is not None and (cur is None or cur < prev):
                raise AssertionError("attainment series must be nondecreasing")


@dataclass
class RunSummary:
    rep: int
    evaluations_started: int
    evaluations_full: int
    steps_consumed: int
    final_best: Optional[float]
    series: AttainmentSeries
    records: Optional[list] = None


def rep_seeds(base_seed: int, rep_index: int) -> tuple:
    """Derive the optimizer RNG and the episode seed base for one repetition."""
    root = np.random.SeedSequence([int(base_seed), int(rep_index)])
    cma_seq, episode_seq = root.spawn(2)
    episode_base = int(episode_seq.generate_state(1, np.uint64)[0])
    return np.random.default_rng(cma_seq), episode_base


def run_single(
    config: ExperimentConfig,
    rep_index: int,
    *,
    keep_records: bool = False,
    env_factory: Optional[Callable] = None,
) -> RunSummary:
    """Run one budgeted optimization and sample its attainment series."""
    env = env_factory() if env_factory else make_env(config.env_id)
    config.validate(env)
    t_max = env.t_max
    stopping = config.stopping.build(t_max)
    rng, episode_base = rep_seeds(config.base_seed, rep_index)

    es = CMAES(np.zeros(policy_dim(env)), INITIAL_SIGMA, rng)
    ref = BestReference.empty(t_max)
    clock = BudgetClock(config.budget_T)

    starts: list = []  # budget consumed before each evaluation started
    finished: list = []  # (finish budget, full?, objective) per recorded evaluation
    records = [] if keep_records else None
    index = 0
    exhausted = False
    while not exhausted and clock.remaining > 0:
        candidates = es.ask()
        fitnesses = []
        for params in candidates:
            if clock.remaining < 1:
                exhausted = True
                break
            starts.append(clock.consumed)
            record = evaluate_with_stopping(
                env,
                policy_for_env(params, env),
                ref,
                stopping,
                clock,
                seed=episode_base + index,
                index=index,
                transform=config.transform,
            )
            index += 1
            if record is None:
                exhausted = True
                break
            maybe_update_best(record, ref, t_max)
            finished.append((record.budget_consumed_at_finish, record.fully_evaluated, record.reported_objective))
            fitnesses.append(record.reported_objective)
            if keep_records:
                records.append(record)
        else:
            es.tell(candidates, fitnesses)

    series = _sample_series(config.checkpoints(), starts, finished)
    full = sum(1 for _, ok, _ in finished if ok)
    return RunSummary(
        rep=rep_index,
        evaluations_started=len(starts),
        evaluations_full=full,
        steps_consumed=clock.consumed,
        final_best=None if ref.best_index is None else ref.best_full_objective,
        series=series,
        records=records,
    )


def _sample_series(checkpoints, starts, finished) -> AttainmentSeries:
    best_col, started_col, full_col = [], [], []
    i_start = i_fin = 0
    best = None
    n_full = 0
    for b in checkpoints:
        while i_start < len(starts) and starts[i_start] < b:
            i_start += 1
        while i_fin < len(finished) and finished[i_fin][0] <= b:
            _, ok, obj = finished[i_fin]
            if ok:
                n_full += 1
                if best is None or obj > best:
                    best = obj
            i_fin += 1
        best_col.append(best)
        started_col.append(i_start)
        full_col.append(n_full)
    return AttainmentSeries(list(checkpoints), best_col, started_col, full_col)


def _run_rep(args):
    config, rep = args
    return run_single(config, rep)


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> list:
    """Run every repetition; results are ordered by repetition for any ``jobs``."""
    config.validate()
    reps = range(config.repetitions)
    if jobs <= 1:
        out = []
        for rep in reps:
            log.info("%s: repetition %d/%d", config.experiment_id, rep + 1, config.repetitions)
            out.append(run_single(config, rep))
        return out
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_rep, [(config, rep) for rep in reps]))


# -- ratios and CSV ------------------------------------------------------------


def evaluation_ratio(summaries_gesp: Sequence, summaries_standard: Sequence, budgets=None) -> list:
    """Median evaluations started with GESP over median without, per checkpoint.

    Accepts ``RunSummary`` lists or lists of per-checkpoint count sequences
    (then ``budgets`` labels the checkpoints). Checkpoints with a zero
    denominator are skipped with a warning.
    """
    a = [_started(s) for s in summaries_gesp]
    b = [_started(s) for s in summaries_standard]
    budgets_a = _budgets(summaries_gesp)
    budgets_b = _budgets(summaries_standard)
    if budgets_a is not None and budgets_b is not None and budgets_a != budgets_b:
        raise ValueError("checkpoint grids differ")
    width = len(a[0])
    if any(len(x) != width for x in a + b):
        raise ValueError("checkpoint grids differ")
    budgets = budgets_a or budgets_b or budgets or list(range(1, width + 1))
    if len(budgets) != width:
        raise ValueError("checkpoint grids differ")
    out = []
    for j, budget in enumerate(budgets):
        num = statistics.median(x[j] for x in a)
        den = statistics.median(x[j] for x in b)
        if den == 0:
            warnings.warn(f"no evaluations started by budget {budget}; ratio undefined", RuntimeWarning)
            continue
        out.append((budget, num / den))
    return out


def _started(s):
    return s.series.started if isinstance(s, RunSummary) else list(s)


def _budgets(summaries):
    first = summaries[0]
    return first.series.budgets if isinstance(first, RunSummary) else None


def fmt_float(x) -> str:
    """Locale-independent, round-trip exact float rendering; ``None`` is empty."""
    if x is None:
        return ""
    return repr(float(x))


def runs_csv_text(experiment_id: str, summaries: Sequence[RunSummary]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RUNS_COLUMNS)
    for s in summaries:
        ser = s.series
        for budget, best, started, full in zip(ser.budgets, ser.best, ser.started, ser.full):
            writer.writerow([experiment_id, s.rep, budget, fmt_float(best), started, full])
    return buf.getvalue()


def write_runs_csv(path, experiment_id: str, summaries: Sequence[RunSummary]) -> None:
    Path(path).write_text(runs_csv_text(experiment_id, summaries), encoding="utf-8", newline="")


@dataclass
class RunsTable:
    """``runs.csv`` read back as per-repetition columns over a shared grid."""

    experiment_id: str
    budgets: list
    best: dict  # rep -> list of float | None
    started: dict
    full: dict

    @property
    def reps(self) -> list:
        return sorted(self.best)

    def best_matrix(self) -> list:
        return [self.best[r] for r in self.reps]

    def final_best(self) -> list:
        return [self.best[r][-1] for r in self.reps]


def read_runs_csv(path) -> RunsTable:
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RUNS_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        exp_id = None
        grid: dict = {}
        best: dict = {}
        started: dict = {}
        full: dict = {}
        for row in reader:
            exp_id = row["experiment_id"]
            rep = int(row["rep"])
            grid.setdefault(rep, []).append(int(row["checkpoint_budget"]))
            cell = row["best_objective"]
            best.setdefault(rep, []).append(float(cell) if cell else None)
            started.setdefault(rep, []).append(int(row["evaluations_started"]))
            full.setdefault(rep, []).append(int(row["evaluations_full"]))
    if not grid:
        raise ValueError(f"{path}: no rows")
    grids = list(grid.values())
    if any(g != grids[0] for g in grids):
        raise ValueError(f"{path}: repetitions use different checkpoint grids")
    return RunsTable(exp_id, grids[0], best, started, full)
