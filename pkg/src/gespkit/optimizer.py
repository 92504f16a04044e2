"""Minimal CMA-ES with an ask/tell interface, and linear policy encodings.

The strategy maximizes: larger fitness is better. Evaluation results are told
back exactly as reported, whether the evaluation was complete or not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import as_param_vector

MAX_CONDITION = 1e14


class CMAES:
    """Standard (mu/mu_w, lambda)-CMA-ES with rank-one and rank-mu updates.

    Args:
        mean: initial distribution mean.
        sigma: initial step size, must be positive.
        rng: a ``numpy.random.Generator``; all sampling goes through it.
        popsize: population size, defaults to ``4 + floor(3 ln n)``.
    """

    def __init__(self, mean, sigma: float, rng: np.random.Generator, popsize: int | None = None):
        self.mean = np.asarray(mean, dtype=float).copy()
        n = self.n = self.mean.size
        if n < 1:
            raise ValueError("search space must have at least one dimension")
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        self.sigma = float(sigma)
        self.rng = rng
        self.popsize = int(popsize) if popsize else 4 + int(math.floor(3 * math.log(n)))
        self.mu = self.popsize // 2

        w = math.log(self.mu + 0.5) - np.log(np.arange(1, self.mu + 1))
        self.weights = w / w.sum()
        self.mueff = 1.0 / float(np.sum(self.weights ** 2))

        self.cc = (4 + self.mueff / n) / (n + 4 + 2 * self.mueff / n)
        self.cs = (self.mueff + 2) / (n + self.mueff + 5)
        self.c1 = 2 / ((n + 1.3) ** 2 + self.mueff)
        self.cmu = min(1 - self.c1, 2 * (self.mueff - 2 + 1 / self.mueff) / ((n + 2) ** 2 + self.mueff))
        self.damps = 1 + 2 * max(0.0, math.sqrt((self.mueff - 1) / (n + 1)) - 1) + self.cs
        self.chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n ** 2))

        self.pc = np.zeros(n)
        self.ps = np.zeros(n)
        self.C = np.eye(n)
        self.B = np.eye(n)
        self.D = np.ones(n)
        self.invsqrtC = np.eye(n)
        self.generation = 0

    # decomposition -------------------------------------------------------

    def _decompose(self) -> None:
        self.C = (self.C + self.C.T) / 2
        for attempt in range(2):
            try:
                eigvals, B = np.linalg.eigh(self.C)
                if not np.all(np.isfinite(eigvals)):
                    raise np.linalg.LinAlgError("non-finite eigenvalues")
            except np.linalg.LinAlgError:
                if attempt:
                    raise
                self._recondition()
                continue
            if eigvals.min() <= 0 or eigvals.max() > MAX_CONDITION * eigvals.min():
                if attempt:
                    raise np.linalg.LinAlgError("covariance could not be reconditioned")
                self._recondition()
                continue
            self.B = B
            self.D = np.sqrt(eigvals)
            self.invsqrtC = (B / self.D) @ B.T
            return

    def _recondition(self) -> None:
        eigvals = np.linalg.eigvalsh((self.C + self.C.T) / 2)
        lo, hi = float(eigvals.min()), float(eigvals.max())
        # lift the spectrum until the condition number is well below the cap
        shift = max(10 * hi / MAX_CONDITION - lo, np.finfo(float).tiny)
        self.C = self.C + shift * np.eye(self.n)

    # ask / tell --------------------------------------------------------------

    def ask(self) -> list:
        """Sample ``popsize`` candidates from ``N(mean, sigma**2 C)``."""
        z = self.rng.standard_normal((self.popsize, self.n))
        y = (z * self.D) @ self.B.T
        x = self.mean + self.sigma * y
        if not np.all(np.isfinite(x)):
            raise FloatingPointError("sampled a non-finite candidate")
        return [tuple(row) for row in x.tolist()]

    def tell(self, candidates, fitnesses) -> None:
        if len(candidates) != self.popsize or len(fitnesses) != self.popsize:
            raise ValueError(f"expected {self.popsize} candidates and fitnesses")
        fit = np.asarray(fitnesses, dtype=float)
        if not np.all(np.isfinite(fit)):
            raise ValueError("fitness values must be finite")
        X = np.asarray(candidates, dtype=float)
        # stable sort on negated fitness: best first, ties keep ask order
        order = np.argsort(-fit, kind="stable")[: self.mu]

        old_mean = self.mean
        self.mean = self.weights @ X[order]
        n = self.n
        self.generation += 1
        step = (self.mean - old_mean) / self.sigma

        self.ps = (1 - self.cs) * self.ps + math.sqrt(self.cs * (2 - self.cs) * self.mueff) * (
            self.invsqrtC @ step
        )
        ps_norm = float(np.linalg.norm(self.ps))
        hsig = ps_norm / math.sqrt(1 - (1 - self.cs) ** (2 * self.generation)) / self.chi_n < 1.4 + 2 / (n + 1)
        self.pc = (1 - self.cc) * self.pc + hsig * math.sqrt(self.cc * (2 - self.cc) * self.mueff) * step

        artmp = (X[order] - old_mean) / self.sigma
        self.C = (
            (1 - self.c1 - self.cmu) * self.C
            + self.c1 * (np.outer(self.pc, self.pc) + (1 - hsig) * self.cc * (2 - self.cc) * self.C)
            + self.cmu * (artmp.T * self.weights) @ artmp
        )
        self.sigma *= math.exp((self.cs / self.damps) * (ps_norm / self.chi_n - 1))
        self._decompose()


@dataclass(eq=False)
class LinearPolicy:
    """``action = squash(W @ obs + b)``.

    Parameters are laid out as ``W`` row-major followed by ``b``.
    """

    weights: np.ndarray
    bias: np.ndarray
    squash: str = "sign"
    bound: float = 2.0

    def __post_init__(self):
        # plain Python floats keep the per-step call cheap
        if isinstance(self.weights, list):
            self._w = [[float(v) for v in row] for row in self.weights]
            self._b = [float(v) for v in self.bias]
        else:
            self._w = [list(map(float, row)) for row in np.atleast_2d(self.weights)]
            self._b = [float(v) for v in np.atleast_1d(self.bias)]
        self._params = as_param_vector([v for row in self._w for v in row] + self._b)
        if self.squash not in ("sign", "scaled_tanh"):
            raise ValueError(f"unknown squash {self.squash!r}")
        if len(self._w) == 1:
            z = _affine(self._w[0], self._b[0])
            if self.squash == "sign":
                self.act = lambda obs: 1 if z(obs) > 0 else 0
            else:
                bound, tanh = self.bound, math.tanh
                self.act = lambda obs: bound * tanh(z(obs))

    @property
    def obs_dim(self) -> int:
        return len(self._w[0])

    @property
    def params(self):
        return self._params

    def act(self, obs):
        z = [sum(w * o for w, o in zip(row, obs)) + b for row, b in zip(self._w, self._b)]
        if self.squash == "sign":
            return [1 if v > 0 else 0 for v in z]
        return [self.bound * math.tanh(v) for v in z]

    @classmethod
    def from_params(cls, params, obs_dim: int, action_dim: int = 1, squash: str = "sign", bound: float = 2.0):
        p = [float(v) for v in np.ravel(params)] if not isinstance(params, (tuple, list)) else list(params)
        if len(p) != action_dim * (obs_dim + 1):
            raise ValueError(f"expected {action_dim * (obs_dim + 1)} parameters, got {len(p)}")
        w = [p[i * obs_dim:(i + 1) * obs_dim] for i in range(action_dim)]
        return cls(w, p[action_dim * obs_dim:], squash, bound)


def _affine(w, b):
    # unrolled for the observation sizes of the bundled environments
    if len(w) == 1:
        w0, = w
        return lambda o: w0 * o[0] + b
    if len(w) == 3:
        w0, w1, w2 = w
        return lambda o: w0 * o[0] + w1 * o[1] + w2 * o[2] + b
    if len(w) == 4:
        w0, w1, w2, w3 = w
        return lambda o: w0 * o[0] + w1 * o[1] + w2 * o[2] + w3 * o[3] + b
    return lambda o: sum(wi * oi for wi, oi in zip(w, o)) + b


def policy_dim(env) -> int:
    return env.action_dim * (env.obs_dim + 1)


def policy_for_env(params, env) -> LinearPolicy:
    return LinearPolicy.from_params(params, env.obs_dim, env.action_dim, env.action_kind, env.action_bound)


def policy_act(policy: LinearPolicy, observation):
    return policy.act(observation)
