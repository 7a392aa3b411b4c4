import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import random_pd
from sloc.channel import posterior
from sloc.errors import AbsoluteContinuityViolation, InvalidGeometry, ParseError, SupportMismatch
from sloc.linalg import loewner_leq
from sloc.measures import (
    DiscreteMeasure,
    GaussianMeasure,
    cov,
    gaussian_mutual_information,
    gaussian_posterior,
    kl_divergence,
    load_measure,
    mean,
    measure_from_dict,
    point_mass,
    random_measure,
    save_measure,
    two_point,
)

seeds = st.integers(0, 2**32 - 1)
geoms = st.sampled_from(["cube", "sphere", "ising", "clustered"])


def test_weights_normalized_and_duplicates_merged():
    mu = DiscreteMeasure([[0.0], [1.0], [0.0]], weights=[1.0, 1.0, 2.0])
    assert mu.k == 2
    np.testing.assert_allclose(mu.weights, [0.75, 0.25])
    assert abs(np.logaddexp.reduce(mu.log_weights)) < 1e-12


def test_mean_examples():
    assert mean(two_point())[0] == 0.0
    np.testing.assert_array_equal(mean(point_mass([2.0, 3.0])), [2.0, 3.0])
    mu = DiscreteMeasure([[0.0], [4.0]], weights=[0.25, 0.75])
    assert mean(mu)[0] == pytest.approx(3.0)


def test_cov_examples():
    assert not np.any(cov(point_mass([1.0, 2.0])).array)
    assert cov(two_point()).array[0, 0] == pytest.approx(1.0)


def test_cov_matches_two_pass_naive():
    mu = random_measure(4, 3, 5, "cube")
    w, x = mu.weights, mu.atoms
    m = [sum(w[i] * x[i, a] for i in range(5)) for a in range(3)]
    naive = np.array([[sum(w[i] * (x[i, a] - m[a]) * (x[i, b] - m[b]) for i in range(5))
                       for b in range(3)] for a in range(3)])
    np.testing.assert_allclose(cov(mu).array, naive, atol=1e-12)


def test_kl_examples():
    mu = random_measure(2, 2, 4, "cube")
    assert kl_divergence(mu, mu) == 0.0
    a = DiscreteMeasure([[0.0], [1.0]], weights=[1.0, 0.0])
    b = DiscreteMeasure._with_log_weights(a, np.log([0.5, 0.5]))
    assert kl_divergence(a, b) == pytest.approx(math.log(2.0), abs=1e-15)
    with pytest.raises(AbsoluteContinuityViolation):
        kl_divergence(b, a)
    with pytest.raises(SupportMismatch):
        kl_divergence(a, two_point())


def test_kl_matches_extended_precision_sum():
    g = np.random.default_rng(8)
    atoms = np.arange(8.0)[:, None]
    a = DiscreteMeasure(atoms, weights=g.dirichlet(np.ones(8)))
    b = DiscreteMeasure._with_log_weights(a, np.log(g.dirichlet(np.ones(8))))
    mpmath.mp.dps = 40
    oracle = mpmath.fsum(mpmath.mpf(wa) * (mpmath.log(wa) - mpmath.log(wb)) for wa, wb in zip(a.weights, b.weights))
    assert kl_divergence(a, b) == pytest.approx(float(oracle), abs=1e-12)


def test_gaussian_posterior_examples():
    prior = GaussianMeasure([0.0], [[1.0]])
    assert gaussian_posterior(prior, [[1.0]], 0.0, [3.0]) is prior
    post = gaussian_posterior(prior, [[1.0]], 1.0, [0.0])
    assert post.mean[0] == 0.0
    assert post.covariance.array[0, 0] == pytest.approx(0.5)


def test_gaussian_posterior_matches_grid_bayes():
    sigma2, t = 2.0, 1.5
    s = math.sqrt(sigma2)
    grid = np.linspace(-8 * s, 8 * s, 100_000)
    mu = DiscreteMeasure(grid[:, None], log_weights=-0.5 * grid**2 / sigma2)
    y = 0.7
    grid_post = posterior(mu, [[1.0]], t, [y])
    exact = gaussian_posterior(GaussianMeasure([0.0], [[sigma2]]), [[1.0]], t, [y])
    assert cov(grid_post).array[0, 0] == pytest.approx(exact.covariance.array[0, 0], abs=1e-4)
    assert mean(grid_post)[0] == pytest.approx(exact.mean[0], abs=1e-4)


def test_gaussian_mutual_information_examples():
    assert gaussian_mutual_information(np.zeros((2, 2)), np.eye(2), 1.0) == 0.0
    assert gaussian_mutual_information([[1.0]], [[1.0]], 1.0) == pytest.approx(0.5 * math.log(2))
    assert gaussian_mutual_information([[1.0]], [[1.0]], 0.0) == 0.0


def test_gaussian_mutual_information_monte_carlo():
    sigma = np.diag([1.0, 2.0])
    t, n = 2.0, 1_000_000
    g = np.random.default_rng(2024)
    x = g.standard_normal((n, 2)) * np.sqrt(np.diag(sigma))
    y = math.sqrt(t) * x + g.standard_normal((n, 2))
    # log p(y|x) - log p(y), both Gaussian, Q = I
    marg = t * np.diag(sigma) + 1.0
    log_lik = -0.5 * np.sum((y - math.sqrt(t) * x) ** 2, axis=1)
    log_marg = -0.5 * np.sum(y**2 / marg, axis=1) - 0.5 * np.sum(np.log(marg))
    samples = log_lik - log_marg
    se = samples.std(ddof=1) / math.sqrt(n)
    assert abs(samples.mean() - gaussian_mutual_information(sigma, np.eye(2), t)) <= 3 * se


def test_random_measure_examples():
    mu = random_measure(1, 1, 1, "cube")
    assert mu.k == 1 and not np.any(cov(mu).array)
    ising = random_measure(7, 3, 8, "ising")
    assert {tuple(r) for r in ising.atoms} == {(a, b, c) for a in (-1, 1) for b in (-1, 1) for c in (-1, 1)}
    a, b = random_measure(5, 3, 6, "clustered"), random_measure(5, 3, 6, "clustered")
    assert np.array_equal(a.atoms, b.atoms) and np.array_equal(a.log_weights, b.log_weights)
    with pytest.raises(InvalidGeometry):
        random_measure(1, 2, 5, "ising")
    with pytest.raises(InvalidGeometry):
        random_measure(1, 2, 2, "torus")


def test_sphere_atoms_have_unit_norm():
    mu = random_measure(3, 4, 10, "sphere")
    np.testing.assert_allclose(np.linalg.norm(mu.atoms, axis=1), 1.0)


def test_json_round_trip(tmp_path):
    mu = random_measure(9, 2, 5, "cube")
    save_measure(mu, tmp_path / "m.json")
    back = load_measure(tmp_path / "m.json")
    np.testing.assert_array_equal(back.atoms, mu.atoms)
    np.testing.assert_allclose(back.weights, mu.weights, rtol=1e-15)


def test_json_weights_renormalized_or_rejected():
    d = {"dim": 1, "atoms": [[0.0], [1.0]], "weights": [0.5, 0.5 + 5e-7]}
    assert measure_from_dict(d).weights.sum() == pytest.approx(1.0, abs=1e-15)
    d["weights"] = [0.5, 0.6]
    with pytest.raises(ParseError):
        measure_from_dict(d)


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 4), st.integers(2, 12))
def test_gibbs_inequality(seed, n, k):
    a = random_measure(seed, n, k, "cube")
    g = np.random.default_rng(seed)
    b = DiscreteMeasure._with_log_weights(a, np.log(g.dirichlet(np.ones(a.k))))
    d = kl_divergence(a, b)
    assert d >= -1e-12
    assert kl_divergence(a, a) == 0.0


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 4), st.integers(1, 16), geoms)
def test_cov_is_psd(seed, n, k, geometry):
    try:
        mu = random_measure(seed, n, k, geometry)
    except InvalidGeometry:
        return
    assert loewner_leq(np.zeros((n, n)), cov(mu).array, 1e-12).holds


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 4), st.integers(1, 10))
def test_affine_equivariance(seed, n, k):
    mu = random_measure(seed, n, k, "clustered")
    g = np.random.default_rng(seed)
    a, b = g.standard_normal((n, n)), g.standard_normal(n)
    img = DiscreteMeasure(mu.atoms @ a.T + b, mu.log_weights)
    np.testing.assert_allclose(mean(img), a @ mean(mu) + b, atol=1e-10)
    np.testing.assert_allclose(cov(img).array, a @ cov(mu).array @ a.T, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 4), st.floats(0.1, 3.0), st.floats(0.1, 3.0))
def test_gaussian_posterior_composes(seed, n, t1, t2):
    g = np.random.default_rng(seed)
    sigma, q = random_pd(g, n, 10.0), random_pd(g, n, 10.0)
    prior = GaussianMeasure(np.zeros(n), sigma)
    once = gaussian_posterior(prior, q, t1, g.standard_normal(n))
    twice = gaussian_posterior(once, q, t2, g.standard_normal(n))
    direct = np.linalg.inv(np.linalg.inv(sigma) + (t1 + t2) * np.linalg.inv(q))
    np.testing.assert_allclose(twice.covariance.array, direct, atol=1e-10)
