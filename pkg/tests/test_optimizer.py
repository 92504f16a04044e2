import math

import numpy as np
import pytest

from gespkit.envs import CartPole, Pendulum, Ramp
from gespkit.optimizer import CMAES, LinearPolicy, policy_dim, policy_for_env


def sphere(x):
    return -float(np.sum(np.asarray(x) ** 2))


def optimize(fn, n, seed, budget, sigma=0.5, x0=None):
    es = CMAES(np.zeros(n) if x0 is None else x0, sigma, np.random.default_rng(seed))
    best = -math.inf
    used = 0
    while used + es.popsize <= budget:
        cands = es.ask()
        fits = [fn(c) for c in cands]
        used += len(cands)
        best = max(best, *fits)
        es.tell(cands, fits)
    return es, best


def test_default_population_size():
    for n, lam in ((1, 4), (4, 8), (5, 8), (10, 10), (100, 17)):
        assert CMAES(np.zeros(n), 1.0, np.random.default_rng(0)).popsize == lam


def test_same_seed_same_stream():
    a = CMAES(np.zeros(3), 0.5, np.random.default_rng(11))
    b = CMAES(np.zeros(3), 0.5, np.random.default_rng(11))
    for _ in range(5):
        ca, cb = a.ask(), b.ask()
        assert ca == cb
        fits = [sphere(c) for c in ca]
        a.tell(ca, fits)
        b.tell(cb, fits)
    assert np.array_equal(a.mean, b.mean)


def test_tiny_sigma_samples_at_the_mean():
    mean = np.array([1.0, -2.0, 3.0])
    es = CMAES(mean, 1e-12, np.random.default_rng(0))
    for c in es.ask():
        assert np.allclose(c, mean, atol=1e-9)


def test_first_generation_sample_covariance_is_sigma_squared_identity():
    # Monte Carlo oracle: without any tell, draws are N(m, sigma^2 I)
    sigma, n = 0.5, 4
    es = CMAES(np.zeros(n), sigma, np.random.default_rng(123))
    draws = np.array([c for _ in range(4000) for c in es.ask()])
    cov = np.cov(draws.T)
    assert np.allclose(np.diag(cov), sigma ** 2, rtol=0.05)
    assert np.abs(cov - np.diag(np.diag(cov))).max() < 0.05 * sigma ** 2
    assert np.allclose(draws.mean(axis=0), 0.0, atol=0.02)


def test_sphere_converges():
    _, best = optimize(sphere, 5, seed=1, budget=5000, x0=np.full(5, 1.0))
    assert best > -1e-8


def test_covariance_stays_symmetric_positive_definite():
    es, _ = optimize(lambda x: -abs(x[0]) - 100 * (x[1] - x[0] ** 2) ** 2 - sum(np.abs(x[2:])), 6, 3, 3000)
    assert np.allclose(es.C, es.C.T)
    assert np.linalg.eigvalsh(es.C).min() > 0
    assert es.sigma > 0


def test_tell_rejects_bad_fitness():
    es = CMAES(np.zeros(2), 0.5, np.random.default_rng(0))
    cands = es.ask()
    bad = [0.0] * len(cands)
    bad[1] = math.nan
    with pytest.raises(ValueError):
        es.tell(cands, bad)
    with pytest.raises(ValueError):
        es.tell(cands, [0.0])


def test_constructor_validation():
    with pytest.raises(ValueError):
        CMAES(np.zeros(2), 0.0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        CMAES(np.zeros(0), 1.0, np.random.default_rng(0))


def test_maximization_direction():
    # fitness rewards large x: the mean must move up
    es, _ = optimize(lambda x: float(x[0]), 1, seed=0, budget=200)
    assert es.mean[0] > 1.0


@pytest.mark.parametrize("env", [CartPole(), Pendulum(), Ramp(-1.0, 10)])
def test_policy_params_round_trip(env):
    n = policy_dim(env)
    params = tuple(float(v) for v in np.linspace(-1, 1, n))
    pol = policy_for_env(params, env)
    assert pol.params == params
    assert policy_for_env(pol.params, env).params == params


def test_policy_dimension_mismatch():
    with pytest.raises(ValueError):
        LinearPolicy.from_params([1.0, 2.0], 4)


def test_policy_outputs_are_valid_actions():
    rng = np.random.default_rng(0)
    cp, pe = CartPole(), Pendulum()
    for _ in range(200):
        a = policy_for_env(rng.normal(0, 10, policy_dim(cp)), cp).act(tuple(rng.normal(size=4)))
        assert a in (0, 1)
        u = policy_for_env(rng.normal(0, 10, policy_dim(pe)), pe).act(tuple(rng.normal(size=3)))
        assert -2.0 <= u <= 2.0


def test_fast_path_matches_generic_dot_product():
    rng = np.random.default_rng(5)
    for obs_dim in (1, 2, 3, 4, 6):
        w = rng.normal(size=obs_dim)
        b = rng.normal()
        pol = LinearPolicy.from_params(list(w) + [b], obs_dim, squash="scaled_tanh")
        obs = tuple(rng.normal(size=obs_dim))
        assert pol.act(obs) == pytest.approx(2.0 * math.tanh(float(w @ np.array(obs)) + b), rel=1e-12)
        generic = LinearPolicy.act(pol, obs)
        assert generic[0] == pytest.approx(pol.act(obs), rel=1e-12)
