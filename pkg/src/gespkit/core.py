"""Episodic evaluation contract and the trace/record data model.

Time is counted in environment steps. An evaluation of a candidate runs one
episode of at most ``t_max`` steps and accumulates the per-step rewards into
a cumulative objective ``f[1..t]``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple


class ContractViolation(RuntimeError):
    """An environment or trace was used outside its contract."""


class BudgetExhausted(RuntimeError):
    """Raised when a step is requested after the budget has been spent."""


class Termination(enum.Enum):
    COMPLETED = "completed"
    NATURALLY_TERMINATED = "naturally_terminated"
    EARLY_STOPPED = "early_stopped"


ParamVector = Tuple[float, ...]


def as_param_vector(values: Sequence[float]) -> ParamVector:
    """Convert ``values`` to an immutable tuple of finite floats."""
    out = tuple(map(float, values))
    if not all(map(math.isfinite, out)):
        raise ValueError(f"parameter vector has non-finite entries: {out}")
    return out


@dataclass
class EpisodeTrace:
    """Cumulative objective values of one (possibly partial) evaluation.

    ``cumulative[t - 1]`` holds ``f[t]``; ``stopped_by`` names the criterion
    that fired when ``termination`` is ``EARLY_STOPPED``.
    """

    cumulative: list
    termination: Termination
    stopped_by: Optional[str] = None

    @property
    def steps_run(self) -> int:
        return len(self.cumulative)

    @property
    def final(self) -> float:
        return self.cumulative[-1]


@dataclass
class EvaluationRecord:
    index: int
    seed: int
    params: ParamVector
    trace: EpisodeTrace
    budget_consumed_at_finish: int

    @property
    def reported_objective(self) -> float:
        return self.trace.cumulative[-1]

    @property
    def fully_evaluated(self) -> bool:
        return self.trace.termination is not Termination.EARLY_STOPPED

    @property
    def budget_consumed_at_start(self) -> int:
        return self.budget_consumed_at_finish - self.trace.steps_run


@dataclass
class BudgetClock:
    """Step budget shared by every evaluation of one run."""

    limit: int
    consumed: int = 0

    def __post_init__(self):
        if self.limit < 0:
            raise ValueError("budget limit must be non-negative")

    @property
    def remaining(self) -> int:
        return self.limit - self.consumed

    def tick(self) -> None:
        if self.consumed >= self.limit:
            raise BudgetExhausted(f"budget of {self.limit} steps spent")
        self.consumed += 1


class Environment:
    """Deterministic episodic environment.

    Subclasses implement :meth:`_reset` and :meth:`_step`; this base class
    enforces the episode bookkeeping (no stepping past termination or
    ``t_max``).
    """

    env_id: str = "abstract"
    t_max: int = 1
    obs_dim: int = 1
    action_dim: int = 1
    #: "sign" for binary actions, "scaled_tanh" for bounded continuous ones
    action_kind: str = "sign"
    action_bound: float = 1.0

    def __init__(self):
        self._t = 0
        self._done = True

    @property
    def steps_taken(self) -> int:
        return self._t

    @property
    def state(self) -> tuple:
        raise NotImplementedError

    def reset(self, seed: int):
        self._t = 0
        self._done = False
        return self._reset(seed)

    def step(self, action):
        if self._done or self._t >= self.t_max:
            raise ContractViolation(f"{self.env_id}: step() on an inactive episode")
        obs, reward, terminated = self._step(action)
        self._t += 1
        if terminated or self._t >= self.t_max:
            self._done = True
        return obs, reward, terminated

    def _reset(self, seed: int):
        raise NotImplementedError

    def _step(self, action):
        raise NotImplementedError


def pad_trace_to_full(trace: EpisodeTrace, t_max: int) -> list:
    """Extend a finished trace to length ``t_max`` by holding its last value.

    Early-stopped traces are rejected: they never become a reference.
    """
    if trace.termination is Termination.EARLY_STOPPED:
        raise ContractViolation("cannot pad an early-stopped trace")
    n = trace.steps_run
    if n == 0 or n > t_max:
        raise ContractViolation(f"trace length {n} incompatible with t_max={t_max}")
    values = list(trace.cumulative)
    values.extend([values[-1]] * (t_max - n))
    return values

