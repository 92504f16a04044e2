"""Generalized early stopping for episodic evaluations.

A candidate is stopped at step ``t > t_grace`` when both its current and its
``t_grace``-steps-old cumulative objective lie strictly below both the
current and the ``t_grace``-steps-old objective of the best fully evaluated
solution::

    max(f[t], f[t - g]) < min(ref[t], ref[t - g])

Only fully evaluated candidates may replace the reference, and they replace
it wholesale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .core import (
    BudgetClock,
    EpisodeTrace,
    EvaluationRecord,
    Termination,
    pad_trace_to_full,
)
from .envs import HealthyBounds, NoProgress, parse_criterion

NEG_INF = float("-inf")


@dataclass
class BestReference:
    ref_values: list
    best_full_objective: float = NEG_INF
    best_index: Optional[int] = None
    _floor_cache: Optional[tuple] = field(default=None, init=False, repr=False, compare=False)

    @classmethod
    def empty(cls, t_max: int) -> "BestReference":
        return cls([NEG_INF] * t_max)

    @property
    def t_max(self) -> int:
        return len(self.ref_values)

    @property
    def has_best(self) -> bool:
        return self.best_index is not None

    def floor(self, g: int) -> list:
        """``floor[t] = min(ref[t], ref[t - g])`` for ``t > g``, ``-inf`` before.

        Cached until the reference list is replaced, so evaluations that stop
        after a few steps do not pay for a full pass over the reference.
        """
        cached = self._floor_cache
        if cached is not None and cached[0] is self.ref_values and cached[1] == g:
            return cached[2]
        refv = self.ref_values
        floor = [NEG_INF] * (g + 1) + [
            min(refv[t - 1], refv[t - g - 1]) for t in range(g + 1, len(refv) + 1)
        ]
        self._floor_cache = (refv, g, floor)
        return floor


@dataclass(frozen=True)
class GraceConfig:
    t_grace: int

    def __post_init__(self):
        if self.t_grace < 0:
            raise ValueError("t_grace must be non-negative")

    @classmethod
    def from_fraction(cls, fraction: float, t_max: int) -> "GraceConfig":
        """Round ``fraction * t_max`` half-up to a step count."""
        if not 0.0 <= fraction <= 1.0:
            raise ValueError(f"t_grace fraction must lie in [0, 1], got {fraction}")
        return cls(int(math.floor(fraction * t_max + 0.5)))


@dataclass(frozen=True)
class MonotoneTransform:
    """Per-step additive offset ``k``: ``f_new[t] = f[t] + t * k``."""

    k: float = 0.0
    enabled: bool = False


def should_stop(t: int, trace_prefix: Sequence[float], ref: BestReference, grace: GraceConfig) -> bool:
    g = grace.t_grace
    if t <= g:
        return False
    refv = ref.ref_values
    lhs = max(trace_prefix[t - 1], trace_prefix[t - g - 1] if g else trace_prefix[t - 1])
    rhs = min(refv[t - 1], refv[t - g - 1])
    return lhs < rhs


def apply_monotone_transform(trace_prefix: Sequence[float], transform: MonotoneTransform) -> list:
    if not transform.enabled:
        raise ValueError("transform is disabled")
    k = transform.k
    return [v + t * k for t, v in enumerate(trace_prefix, start=1)]


# -- stopping policies --------------------------------------------------------
#
# ``checker(ref)`` returns either None (never stop) or a callable
# ``check(t, trace, state) -> criterion id | None`` bound to the current
# reference.


@dataclass(frozen=True)
class Standard:
    name = "standard"

    def checker(self, ref):
        return None


@dataclass(frozen=True)
class Gesp:
    grace: GraceConfig

    name = "gesp"

    def checker(self, ref):
        g = self.grace.t_grace
        if not ref.has_best or g >= ref.t_max:
            return None
        floor = ref.floor(g)

        def check(t, trace, state):
            if t > g:
                cur = trace[t - 1]
                old = trace[t - g - 1] if g else cur
                if (cur if cur > old else old) < floor[t]:
                    return "gesp"
            return None

        return check


@dataclass(frozen=True)
class ProblemSpecific:
    criteria: tuple

    name = "problem"

    def checker(self, ref):
        criteria = self.criteria

        def check(t, trace, state):
            for c in criteria:
                if c.fires(trace, state):
                    return c.criterion_id
            return None

        return check


@dataclass(frozen=True)
class Composite:
    """GESP first, then each problem-specific criterion in order."""

    grace: GraceConfig
    criteria: tuple

    name = "composite"

    def checker(self, ref):
        gesp = Gesp(self.grace).checker(ref)
        problem = ProblemSpecific(self.criteria).checker(ref)
        if gesp is None:
            return problem

        def check(t, trace, state):
            return gesp(t, trace, state) or problem(t, trace, state)

        return check


def evaluate_with_stopping(
    env,
    policy,
    ref: BestReference,
    stopping,
    clock: BudgetClock,
    *,
    seed: int = 0,
    index: int = 0,
    transform: MonotoneTransform = MonotoneTransform(),
) -> Optional[EvaluationRecord]:
    """Run one episode of ``policy`` under ``stopping``.

    Returns ``None`` when the budget runs out before the episode ends; such
    an evaluation is discarded. Steps it consumed stay consumed.
    """
    if clock.remaining < 1:
        raise ValueError("no budget left to start an evaluation")
    check = stopping.checker(ref)
    needs_state = isinstance(stopping, (ProblemSpecific, Composite))
    act = policy.act
    step = env.step
    k = transform.k if transform.enabled else 0.0
    t_max = env.t_max

    obs = env.reset(seed)
    trace: list = []
    append = trace.append
    f = 0.0
    termination = Termination.COMPLETED
    stopped_by = None
    for t in range(1, t_max + 1):
        if clock.consumed >= clock.limit:
            return None
        obs, reward, terminated = step(act(obs))
        clock.consumed += 1
        f += reward + k if k else reward
        append(f)
        if terminated:
            termination = Termination.NATURALLY_TERMINATED
            break
        if check is not None:
            by = check(t, trace, env.state if needs_state else None)
            if by is not None:
                termination = Termination.EARLY_STOPPED
                stopped_by = by
                break
    return EvaluationRecord(
        index=index,
        seed=seed,
        params=policy.params,
        trace=EpisodeTrace(trace, termination, stopped_by),
        budget_consumed_at_finish=clock.consumed,
    )


def maybe_update_best(record: EvaluationRecord, ref: BestReference, t_max: int) -> bool:
    if not record.fully_evaluated:
        return False
    if not record.reported_objective > ref.best_full_objective:
        return False
    ref.ref_values = pad_trace_to_full(record.trace, t_max)
    ref.best_full_objective = record.reported_objective
    ref.best_index = record.index
    return True


@dataclass
class StoppingSpec:
    """Parsed ``--stopping`` value, resolved against an environment later."""

    kind: str
    t_grace_fraction: float = 0.2
    criteria: tuple = field(default_factory=tuple)

    def build(self, t_max: int):
        grace = GraceConfig.from_fraction(self.t_grace_fraction, t_max)
        if self.kind == "standard":
            return Standard()
        if self.kind == "gesp":
            return Gesp(grace)
        if self.kind == "problem":
            return ProblemSpecific(self.criteria)
        if self.kind == "composite":
            return Composite(grace, self.criteria)
        raise ValueError(f"unknown stopping kind {self.kind!r}")

    def describe(self) -> str:
        if self.kind in ("problem", "composite"):
            return self.kind + ":" + "+".join(_criterion_str(c) for c in self.criteria)
        return self.kind


def _criterion_str(c) -> str:
    if isinstance(c, NoProgress):
        return f"noprogress:{c.window}"
    if isinstance(c, HealthyBounds):
        return f"bounds:{c.state_index}:{c.low!r}:{c.high!r}"
    return f"speed:{c.rate!r}"


def parse_stopping(text: str, t_grace_fraction: float = 0.2) -> StoppingSpec:
    """Parse ``standard``, ``gesp``, ``problem:<c>[+<c>...]`` or
    ``composite:<c>[+<c>...]``."""
    if not 0.0 <= t_grace_fraction <= 1.0:
        raise ValueError(f"t_grace fraction must lie in [0, 1], got {t_grace_fraction}")
    kind, _, rest = text.partition(":")
    if kind in ("standard", "gesp"):
        if rest:
            raise ValueError(f"{kind} takes no criteria")
        return StoppingSpec(kind, t_grace_fraction)
    if kind in ("problem", "composite"):
        if not rest:
            raise ValueError(f"{kind} stopping needs at least one criterion")
        criteria = tuple(parse_criterion(part) for part in rest.split("+"))
        return StoppingSpec(kind, t_grace_fraction, criteria)
    raise ValueError(f"unknown stopping policy {text!r}")
