import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import random_psd
from sloc import rng
from sloc.channel import (
    ErasureDraw,
    GaussianChannel,
    bayes_estimate,
    erasure_posterior,
    ml_estimate,
    posterior,
    sample_channel,
    sample_erasure,
)
from sloc.errors import EmptyPosterior, InvalidParameter, NonFiniteInput
from sloc.measures import DiscreteMeasure, mean, point_mass, random_measure, two_point
from sloc.sde import PathConfig, simulate_exact

seeds = st.integers(0, 2**32 - 1)


def test_draw_fields_recompute_y():
    mu = random_measure(1, 3, 5, "cube")
    q = np.diag([0.5, 1.0, 2.0])
    d = sample_channel(mu, q, "uniform12", np.random.default_rng(0))
    assert 1.0 <= d.tau <= 2.0
    q_half = np.diag(np.sqrt([0.5, 1.0, 2.0]))
    np.testing.assert_allclose(d.y, math.sqrt(d.tau) * d.x + q_half @ d.z, atol=1e-12)
    np.testing.assert_array_equal(d.x, mu.atoms[d.atom_index])


def test_point_mass_always_draws_its_atom():
    mu = point_mass([1.5, -2.0])
    batch = GaussianChannel(mu, np.eye(2)).sample(np.random.default_rng(1), 200, 1.0)
    assert np.all(batch.x == [1.5, -2.0])


def test_tiny_noise_gives_y_close_to_x():
    mu = random_measure(2, 4, 6, "sphere")
    batch = GaussianChannel(mu, 1e-6 * np.eye(4)).sample(np.random.default_rng(2), 10_000, 1.0)
    close = np.linalg.norm(batch.y - batch.x, axis=1) <= 3e-3 * math.sqrt(4)
    assert close.mean() >= 0.99


def test_mean_of_y_matches_scaled_prior_mean():
    mu = random_measure(3, 2, 4, "cube")
    t = 1.7
    y = GaussianChannel(mu, np.eye(2)).sample(np.random.default_rng(3), 1_000_000, t).y
    se = y.std(axis=0, ddof=1) / math.sqrt(y.shape[0])
    assert np.all(np.abs(y.mean(axis=0) - math.sqrt(t) * mean(mu)) <= 3 * se)


def test_posterior_examples():
    mu = two_point()
    assert posterior(mu, [[2.0]], 0.0, [5.0]) is mu
    np.testing.assert_allclose(posterior(mu, [[0.3]], 1.0, [0.0]).weights, [0.5, 0.5], atol=1e-15)


def test_posterior_matches_two_term_bayes():
    mu = two_point()
    post = posterior(mu, [[1.0]], 1.0, [1.0])
    plus = post.weights[post.atoms[:, 0] > 0][0]
    like = [math.exp(-0.5 * (1.0 - s) ** 2) * 0.5 for s in (1.0, -1.0)]
    assert plus == pytest.approx(like[0] / sum(like), abs=1e-12)
    assert plus == pytest.approx(1.0 / (1.0 + math.exp(-2.0)), abs=1e-12)


def test_posterior_rejects_non_finite():
    with pytest.raises(NonFiniteInput):
        posterior(two_point(), [[1.0]], 1.0, [np.nan])


@pytest.mark.parametrize("t, y", [(1.0, 0.3), (2.0, -1.1), (0.5, 2.5)])
def test_bayes_estimate_is_tanh(t, y):
    assert bayes_estimate(two_point(), [[1.0]], t, [y])[0] == pytest.approx(math.tanh(math.sqrt(t) * y), abs=1e-12)


def test_bayes_estimate_examples():
    assert np.array_equal(bayes_estimate(point_mass([3.0, 1.0]), np.eye(2), 1.3, [100.0, -4.0]), [3.0, 1.0])
    mu = random_measure(4, 3, 6, "sphere")
    j = 2
    y = 1e3 * mu.atoms[j]
    np.testing.assert_allclose(bayes_estimate(mu, np.eye(3), 1.0, y), mu.atoms[j], atol=1e-9)


def test_ml_estimate_examples():
    assert np.array_equal(ml_estimate([0.0, 0.0], 2.0), [0.0, 0.0])
    np.testing.assert_allclose(ml_estimate([2.0, 4.0], 4.0), [1.0, 2.0])
    x, t = np.array([0.3, -0.8]), 1.44
    assert np.array_equal(ml_estimate(math.sqrt(t) * x, t), x)
    with pytest.raises(InvalidParameter):
        ml_estimate([1.0], 0.0)


def test_erasure_degenerate_parameters():
    mu = random_measure(5, 4, 6, "cube")
    g = np.random.default_rng(5)
    for _ in range(20):
        assert not sample_erasure(mu, 0.0, g)[1].mask.any()
        x, d = sample_erasure(mu, 1.0, g)
        assert d.mask.all() and np.array_equal(d.revealed_values, x)
    with pytest.raises(InvalidParameter):
        sample_erasure(mu, 1.5, g)


def test_erasure_mask_size_binomial():
    mu = random_measure(6, 10, 3, "cube")
    g = np.random.default_rng(6)
    sizes = np.array([sample_erasure(mu, 0.3, g)[1].mask.sum() for _ in range(100_000)])
    se = math.sqrt(10 * 0.3 * 0.7 / sizes.size)
    assert abs(sizes.mean() - 3.0) <= 3 * se


def test_erasure_posterior_examples():
    mu = random_measure(7, 3, 8, "ising")
    uniform = DiscreteMeasure(mu.atoms)
    assert erasure_posterior(uniform, ErasureDraw(np.zeros(3, bool), [], 0.5)) is uniform
    post = erasure_posterior(uniform, ErasureDraw([True, False, False], [1.0], 0.5))
    ok = uniform.atoms[:, 0] == 1.0
    np.testing.assert_allclose(post.weights[ok], 0.25, atol=1e-15)
    assert np.all(post.weights[~ok] == 0)
    full = erasure_posterior(uniform, ErasureDraw(np.ones(3, bool), uniform.atoms[3], 1.0))
    assert full.weights[3] == 1.0
    with pytest.raises(EmptyPosterior):
        erasure_posterior(uniform, ErasureDraw([True, False, False], [0.5], 0.5))


def test_gaussian_mixture_consistency():
    mu = random_measure(8, 2, 5, "clustered")
    ch = GaussianChannel(mu, np.diag([0.5, 1.5]))
    batch = ch.sample(rng.stream(8, rng.CHANNEL), 100_000)
    w = np.exp(ch.tilt(batch.tau, np.sqrt(batch.tau)[:, None] * batch.y))
    se = w.std(axis=0, ddof=1) / math.sqrt(w.shape[0])
    assert np.all(np.abs(w.mean(axis=0) - mu.weights) <= 3 * se + 1e-12)


def test_erasure_mixture_consistency():
    mu = random_measure(9, 4, 10, "ising")
    g = np.random.default_rng(9)
    w = np.array([erasure_posterior(mu, sample_erasure(mu, 0.4, g)[1]).weights for _ in range(100_000)])
    se = w.std(axis=0, ddof=1) / math.sqrt(w.shape[0])
    assert np.all(np.abs(w.mean(axis=0) - mu.weights) <= 3 * se + 1e-12)


def _errors(mu, q, r, t, n, seed):
    ch = GaussianChannel(mu, q)
    b = ch.sample(rng.stream(seed, rng.CHANNEL), n, t)
    bayes = ch.barycenter(ch.tilt(b.tau, np.sqrt(b.tau)[:, None] * b.y))
    ml = b.y / np.sqrt(b.tau)[:, None]
    sq = lambda e: np.einsum("pi,ij,pj->p", e, r, e)
    return sq(b.x - bayes), sq(b.x - ml)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_bayes_beats_ml(seed):
    g = np.random.default_rng(seed)
    mu = random_measure(seed, 3, 7, "cube")
    r = random_psd(g, 3)
    bayes, ml = _errors(mu, np.eye(3), r, 1.3, 100_000, seed)
    diff = bayes - ml
    assert diff.mean() <= 3 * diff.std(ddof=1) / math.sqrt(diff.size)


def test_ml_risk_is_log2_trace():
    mu = random_measure(11, 2, 4, "sphere")
    q = np.array([[1.0, 0.3], [0.3, 0.5]])
    r = np.array([[2.0, 0.0], [0.0, 1.0]])
    _, ml = _errors(mu, q, r, "uniform12", 200_000, 11)
    se = ml.std(ddof=1) / math.sqrt(ml.size)
    assert abs(ml.mean() - math.log(2) * np.trace(r @ q)) <= 3 * se


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 4), st.integers(1, 10), st.floats(0.0, 3.0), st.floats(1e-3, 1e3))
def test_posterior_ignores_weight_scaling(seed, n, k, t, c):
    mu = random_measure(seed, n, k, "cube")
    scaled = DiscreteMeasure(mu.atoms, weights=c * mu.weights)
    y = np.random.default_rng(seed).standard_normal(n)
    np.testing.assert_allclose(posterior(scaled, np.eye(n), t, y).log_weights,
                               posterior(mu, np.eye(n), t, y).log_weights, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seeds, st.integers(1, 3), st.integers(2, 8))
def test_tilting_composes_along_a_path(seed, n, k):
    mu = random_measure(seed, n, k, "cube")
    q = np.eye(n) * 0.7
    cfg = PathConfig(seed=seed, dt=1e-2, t_max=2.0, record_every=50)
    states = simulate_exact(mu, q, 0, cfg)
    ch = GaussianChannel(mu, q)
    s1, s2 = states[1], states[-1]
    # a second tilt by the increment from t1 to t2 composes to the one-shot tilt at t2
    step1 = DiscreteMeasure._with_log_weights(mu, ch.tilt(s1.t, s1.ybar)[0])
    step2 = GaussianChannel(step1, q).tilt(s2.t - s1.t, s2.ybar - s1.ybar)[0]
    np.testing.assert_allclose(step2, s2.log_weights, atol=1e-9)
