"""Desk-scale episodic environments and problem-specific stopping criteria.

Dynamics constants follow the public classic-control reference tasks:

cart-pole
    gravity 9.8, cart mass 1.0, pole mass 0.1, pole half-length 0.5,
    force magnitude 10.0, Euler step 0.02 s, reward 1 per step, episode
    ends when ``|x| > 2.4`` or ``|theta| > 12 deg``, ``t_max = 500``.
pendulum
    g 10.0, m 1.0, l 1.0, dt 0.05, max speed 8, max torque 2, reward
    ``-(angle**2 + 0.1*omega**2 + 0.001*torque**2)``, ``t_max = 200``.
ramp
    constant reward per step, no dynamics, used as an analytic test bed.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .core import Environment

TWO_PI = 2.0 * math.pi

CARTPOLE_THETA_LIMIT = 12 * 2 * math.pi / 360
CARTPOLE_X_LIMIT = 2.4

# -(pi**2 + 0.1 * 8**2 + 0.001 * 2**2)
PENDULUM_MIN_REWARD = -(math.pi ** 2 + 0.1 * 64.0 + 0.001 * 4.0)


def angle_normalize(x: float) -> float:
    """Map ``x`` to ``[-pi, pi]``; an angle of exactly pi stays pi."""
    y = ((x + math.pi) % TWO_PI) - math.pi
    if y == -math.pi:
        return math.pi
    return y


class CartPole(Environment):
    env_id = "cartpole"
    obs_dim = 4
    action_dim = 1
    action_kind = "sign"

    gravity = 9.8
    masscart = 1.0
    masspole = 0.1
    length = 0.5  # half the pole length
    force_mag = 10.0
    tau = 0.02

    def __init__(self, t_max: int = 500):
        super().__init__()
        self._rng = random.Random()
        self.t_max = t_max
        self.total_mass = self.masspole + self.masscart
        self.polemass_length = self.masspole * self.length
        self.x = self.x_dot = self.theta = self.theta_dot = 0.0

    @property
    def state(self):
        return (self.x, self.x_dot, self.theta, self.theta_dot)

    def _reset(self, seed):
        rng = self._rng
        rng.seed(seed)
        self.x, self.x_dot, self.theta, self.theta_dot = (
            rng.uniform(-0.05, 0.05) for _ in range(4)
        )
        return self.state

    def _step(self, action):
        # action: 1 pushes right, 0 pushes left
        force = self.force_mag if action == 1 else -self.force_mag
        costheta = math.cos(self.theta)
        sintheta = math.sin(self.theta)
        temp = (force + self.polemass_length * self.theta_dot ** 2 * sintheta) / self.total_mass
        thetaacc = (self.gravity * sintheta - costheta * temp) / (
            self.length * (4.0 / 3.0 - self.masspole * costheta ** 2 / self.total_mass)
        )
        xacc = temp - self.polemass_length * thetaacc * costheta / self.total_mass

        self.x += self.tau * self.x_dot
        self.x_dot += self.tau * xacc
        self.theta += self.tau * self.theta_dot
        self.theta_dot += self.tau * thetaacc

        terminated = (
            self.x < -CARTPOLE_X_LIMIT
            or self.x > CARTPOLE_X_LIMIT
            or self.theta < -CARTPOLE_THETA_LIMIT
            or self.theta > CARTPOLE_THETA_LIMIT
        )
        return (self.x, self.x_dot, self.theta, self.theta_dot), 1.0, terminated


def cartpole_step(state, action):
    """Pure-function form of one cart-pole step: ``(state, reward, terminated)``."""
    env = CartPole()
    env.x, env.x_dot, env.theta, env.theta_dot = (float(v) for v in state)
    new_state, reward, terminated = env._step(action)
    return new_state, reward, terminated


class Pendulum(Environment):
    env_id = "pendulum"
    obs_dim = 3
    action_dim = 1
    action_kind = "scaled_tanh"
    action_bound = 2.0

    max_speed = 8.0
    max_torque = 2.0
    dt = 0.05
    g = 10.0
    m = 1.0
    l = 1.0

    def __init__(self, t_max: int = 200):
        super().__init__()
        self._rng = random.Random()
        self.t_max = t_max
        self.theta = 0.0
        self.omega = 0.0

    @property
    def state(self):
        return (self.theta, self.omega)

    def _obs(self):
        return (math.cos(self.theta), math.sin(self.theta), self.omega)

    def _reset(self, seed):
        rng = self._rng
        rng.seed(seed)
        self.theta = rng.uniform(-math.pi, math.pi)
        self.omega = rng.uniform(-1.0, 1.0)
        return self._obs()

    def _step(self, torque):
        u = min(max(float(torque), -self.max_torque), self.max_torque)
        th, thdot = self.theta, self.omega
        # theta is measured from upright, where gravity is destabilizing
        cost = angle_normalize(th) ** 2 + 0.1 * thdot ** 2 + 0.001 * u ** 2
        newthdot = thdot + (
            3.0 * self.g / (2.0 * self.l) * math.sin(th) + 3.0 / (self.m * self.l ** 2) * u
        ) * self.dt
        newthdot = min(max(newthdot, -self.max_speed), self.max_speed)
        self.theta = angle_normalize(th + newthdot * self.dt)
        self.omega = newthdot
        return (math.cos(self.theta), math.sin(self.theta), newthdot), -cost, False


def pendulum_step(state, torque):
    """Pure-function form of one pendulum step: ``(state, reward, False)``."""
    env = Pendulum()
    env.theta, env.omega = float(state[0]), float(state[1])
    _, reward, terminated = env._step(torque)
    return env.state, reward, terminated


class Ramp(Environment):
    """Constant reward per step; the start state does not depend on the seed."""

    obs_dim = 1
    action_dim = 1
    action_kind = "sign"

    def __init__(self, per_step_reward: float = -1.0, t_max: int = 100):
        super().__init__()
        self.per_step_reward = float(per_step_reward)
        self.t_max = int(t_max)
        self.env_id = f"ramp:{_fmt(self.per_step_reward)}:{self.t_max}"

    @property
    def state(self):
        return (float(self._t),)

    def _reset(self, seed):
        return (1.0,)

    def _step(self, action):
        return (1.0,), self.per_step_reward, False


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(x)


def make_env(env_id: str) -> Environment:
    """Build an environment from its registry id.

    Recognized ids are ``cartpole``, ``pendulum`` (each optionally suffixed
    with ``:<t_max>``) and ``ramp:<reward>:<t_max>``.
    """
    name, _, rest = env_id.partition(":")
    try:
        if name == "cartpole":
            return CartPole(int(rest)) if rest else CartPole()
        if name == "pendulum":
            return Pendulum(int(rest)) if rest else Pendulum()
        if name == "ramp":
            reward, tmax = rest.split(":")
            return Ramp(float(reward), int(tmax))
    except ValueError as exc:
        raise ValueError(f"malformed environment id {env_id!r}") from exc
    raise ValueError(f"unknown environment id {env_id!r}")


# -- problem-specific criteria ------------------------------------------------


@dataclass(frozen=True)
class NoProgress:
    """Fire when the cumulative objective has not exceeded its value from
    ``window`` steps ago at any point within those ``window`` steps."""

    window: int
    criterion_id = "noprogress"

    def fires(self, trace, state) -> bool:
        t = len(trace)
        if t < self.window:
            return False
        start = trace[t - self.window - 1] if t > self.window else 0.0
        return max(trace[t - self.window:]) <= start


@dataclass(frozen=True)
class HealthyBounds:
    """Fire when ``state[state_index]`` leaves ``[low, high]``."""

    state_index: int
    low: float
    high: float
    criterion_id = "bounds"

    def fires(self, trace, state) -> bool:
        v = state[self.state_index]
        return not (self.low <= v <= self.high)


@dataclass(frozen=True)
class SpeedFloor:
    """Fire when ``f[t] <= rate * t``."""

    rate: float
    criterion_id = "speed"

    def fires(self, trace, state) -> bool:
        t = len(trace)
        return t > 0 and trace[-1] <= self.rate * t


def evaluate_criterion(criterion, trace_prefix, state) -> bool:
    return criterion.fires(trace_prefix, state)


def parse_criterion(text: str):
    """Parse ``noprogress:<window>``, ``bounds:<index>:<low>:<high>`` or
    ``speed:<rate>``."""
    kind, *args = text.split(":")
    try:
        if kind == "noprogress" and len(args) == 1:
            return NoProgress(int(args[0]))
        if kind == "bounds" and len(args) == 3:
            return HealthyBounds(int(args[0]), float(args[1]), float(args[2]))
        if kind == "speed" and len(args) == 1:
            return SpeedFloor(float(args[0]))
    except ValueError:
        pass
    raise ValueError(f"malformed stopping criterion {text!r}")
