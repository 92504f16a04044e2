"""Offline t_grace sensitivity analysis on archived full traces.

An archive holds, per repetition, every evaluation of a run made without
early stopping, in evaluation order. Replaying it under GESP with a given
grace period tells which evaluations would have been cut (assuming the
search would have visited the same candidates) and which one would have
ended up as the best.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import Termination, pad_trace_to_full
from .envs import make_env
from .gesp import GraceConfig, StoppingSpec
from .harness import ExperimentConfig, fmt_float, run_single

REPORT_COLUMNS = ["grace_fraction", "best_not_missed", "steps_computed", "improves_result"]
ARCHIVE_HEADER = ["env_id", "t_max", "evaluations"]
DEFAULT_FRACTIONS = tuple(round(0.05 * i, 2) for i in range(21))


class ArchiveError(ValueError):
    pass


@dataclass
class RepArchive:
    """One repetition: ``values[i]`` is evaluation ``i``'s cumulative objective
    padded to ``t_max``; ``steps_run[i]`` is how many steps it really ran
    (less than ``t_max`` only after natural termination)."""

    env_id: str
    t_max: int
    values: np.ndarray
    steps_run: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.steps_run = np.asarray(self.steps_run, dtype=np.int64)
        if self.values.ndim != 2 or self.values.shape[1] != self.t_max:
            raise ArchiveError(f"every trace must have length t_max={self.t_max}")
        if len(self.steps_run) != len(self.values):
            raise ArchiveError("steps_run and values disagree in length")
        if len(self.steps_run) and (self.steps_run.min() < 1 or self.steps_run.max() > self.t_max):
            raise ArchiveError("steps_run out of range")

    def __len__(self):
        return len(self.values)

    @property
    def total_steps(self) -> int:
        return int(self.steps_run.sum())

    def standard_best(self) -> tuple:
        """Index and value of the best full evaluation without early stopping
        (first occurrence of the maximum, matching the strict update rule)."""
        if not len(self):
            return None, None
        finals = self.values[:, -1]
        i = int(np.argmax(finals))
        return i, float(finals[i])


TraceArchive = list  # of RepArchive, one per repetition


def record_archive(config: ExperimentConfig) -> TraceArchive:
    """Run every repetition without early stopping and keep the full traces."""
    cfg = ExperimentConfig(
        env_id=config.env_id,
        stopping=StoppingSpec("standard", config.stopping.t_grace_fraction),
        budget_T=config.budget_T,
        repetitions=config.repetitions,
        base_seed=config.base_seed,
        sample_grid=config.sample_grid,
        experiment_id=config.experiment_id,
    )
    t_max = make_env(cfg.env_id).t_max
    archive = []
    for rep in range(cfg.repetitions):
        summary = run_single(cfg, rep, keep_records=True)
        rows, steps = [], []
        for rec in summary.records:
            if rec.trace.termination is Termination.EARLY_STOPPED:
                raise ArchiveError("archive runs must not stop early")
            rows.append(pad_trace_to_full(rec.trace, t_max))
            steps.append(rec.trace.steps_run)
        archive.append(RepArchive(cfg.env_id, t_max, np.array(rows, dtype=float).reshape(-1, t_max), steps))
    return archive


def write_archive(archive: TraceArchive, directory) -> list:
    """Write ``rep_<k>.csv`` files. Each has a two-line header
    (``env_id,t_max,evaluations`` and its values) followed by one row per
    evaluation: ``steps_run`` then the ``t_max`` cumulative values."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, rep in enumerate(archive):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ARCHIVE_HEADER)
        w.writerow([rep.env_id, rep.t_max, len(rep)])
        for steps, row in zip(rep.steps_run, rep.values):
            w.writerow([int(steps)] + [repr(float(v)) for v in row])
        path = directory / f"rep_{k}.csv"
        path.write_text(buf.getvalue(), encoding="utf-8", newline="")
        paths.append(path)
    return paths


def read_archive(directory) -> TraceArchive:
    directory = Path(directory)
    if not directory.is_dir():
        raise ArchiveError(f"archive directory {directory} does not exist")
    files = sorted(directory.glob("rep_*.csv"), key=lambda p: _rep_number(p))
    if not files:
        raise ArchiveError(f"no rep_<k>.csv files in {directory}")
    archive = []
    for k, path in enumerate(files):
        if _rep_number(path) != k:
            raise ArchiveError(f"archive repetitions are not numbered 0..{len(files) - 1}")
        archive.append(_read_rep(path))
    return archive


def _rep_number(path: Path) -> int:
    try:
        return int(path.stem.split("_", 1)[1])
    except (IndexError, ValueError) as exc:
        raise ArchiveError(f"bad archive file name {path.name}") from exc


def _read_rep(path: Path) -> RepArchive:
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
            meta = next(reader)
        except StopIteration as exc:
            raise ArchiveError(f"{path}: truncated header") from exc
        if header != ARCHIVE_HEADER or len(meta) != 3:
            raise ArchiveError(f"{path}: malformed header")
        try:
            env_id, t_max, count = meta[0], int(meta[1]), int(meta[2])
            rows = [[float(v) for v in row] for row in reader]
        except ValueError as exc:
            raise ArchiveError(f"{path}: {exc}") from exc
    if len(rows) != count:
        raise ArchiveError(f"{path}: header says {count} evaluations, found {len(rows)}")
    if any(len(r) != t_max + 1 for r in rows):
        raise ArchiveError(f"{path}: rows must hold steps_run plus {t_max} values")
    data = np.array(rows, dtype=float).reshape(-1, t_max + 1)
    return RepArchive(env_id, t_max, data[:, 1:], data[:, 0].astype(np.int64))


@dataclass
class RepReplay:
    """Outcome of replaying one repetition.

    ``stopped_at[i]`` is the step at which evaluation ``i`` was cut, or 0 if
    it ran to the end.
    """

    stopped_at: np.ndarray
    best_index: Optional[int]
    best_objective: Optional[float]
    steps_total: int


def replay_with_gesp(archive: RepArchive, t_grace: int) -> RepReplay:
    """Apply the stopping rule and the full-evaluation-only best update to
    the archived traces, in order."""
    t_max = archive.t_max
    g = GraceConfig(t_grace).t_grace
    ref = None
    best = -math.inf
    best_index = None
    stopped = np.zeros(len(archive), dtype=np.int64)
    steps_total = 0
    for i, (row, n) in enumerate(zip(archive.values, archive.steps_run)):
        n = int(n)
        # natural termination at step n wins over a stop at that same step
        last = n if n == t_max else n - 1
        cut = 0
        if ref is not None and g < last:
            # steps t = g+1..last, 0-based positions t-1 and t-g-1
            cur = row[g:last]
            old = row[: last - g]
            floor = np.minimum(ref[g:last], ref[: last - g])
            hits = np.flatnonzero(np.maximum(cur, old) < floor)
            if hits.size:
                cut = int(hits[0]) + g + 1
        if cut:
            stopped[i] = cut
            steps_total += cut
            continue
        steps_total += n
        if row[-1] > best:
            best = float(row[-1])
            best_index = i
            ref = row
    return RepReplay(stopped, best_index, None if best_index is None else best, steps_total)


@dataclass
class ReplayRow:
    grace_fraction: float
    best_not_missed: float
    steps_computed: float
    improves_result: float


def compute_proportions(replays: Sequence[RepReplay], archives: Sequence[RepArchive], grace_fraction: float) -> ReplayRow:
    """Summarize one grace value over all repetitions.

    ``steps_computed`` is a ratio of totals: all replayed steps over all
    archived steps.
    """
    if len(replays) != len(archives) or not replays:
        raise ValueError("need one replay per archived repetition")
    same_best = improves = 0
    replayed = archived = 0
    for rep, arc in zip(replays, archives):
        std_index, std_value = arc.standard_best()
        same_best += rep.best_index == std_index
        if std_value is None or (rep.best_objective is not None and rep.best_objective >= std_value):
            improves += 1
        replayed += rep.steps_total
        archived += arc.total_steps
    n = len(replays)
    return ReplayRow(grace_fraction, same_best / n, replayed / archived if archived else 1.0, improves / n)


def replay_report(archive: TraceArchive, fractions: Sequence[float] = DEFAULT_FRACTIONS) -> list:
    rows = []
    for frac in fractions:
        replays = [
            replay_with_gesp(rep, GraceConfig.from_fraction(frac, rep.t_max).t_grace) for rep in archive
        ]
        rows.append(compute_proportions(replays, archive, frac))
    return rows


def replay_report_csv_text(rows: Sequence[ReplayRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in rows:
        w.writerow([fmt_float(r.grace_fraction), fmt_float(r.best_not_missed),
                    fmt_float(r.steps_computed), fmt_float(r.improves_result)])
    return buf.getvalue()


def write_replay_report(path, rows: Sequence[ReplayRow]) -> None:
    Path(path).write_text(replay_report_csv_text(rows), encoding="utf-8", newline="")
