"""Shared fixtures: the random-measure corpus and the standard Q choices."""
import numpy as np

from sloc import rng as _rng
from sloc.measures import GEOMETRIES, cov, geometry_capacity, random_measure


def corpus(size=50, seed=0):
    """Measures cycling through n in 1..4, k in 2..16 and all four geometries."""
    out = []
    for i in range(size):
        n = 1 + i % 4
        geometry = GEOMETRIES[(i // 4) % 4]
        k = 2 + (7 * i) % 15
        k = int(min(k, geometry_capacity(n, geometry)))
        out.append(random_measure(seed * 1000 + i, n, k, geometry))
    return out


def q_choices(mu, seed=0):
    n = mu.dim
    g = _rng.stream(seed, 99, n, mu.k)
    return {
        "identity": np.eye(n),
        "scaled_cov": 2.0 * cov(mu).array + 1e-9 * np.eye(n),
        "diag_random": np.diag(g.uniform(0.2, 2.0, size=n)),
    }


def random_psd(g, n, rank=None):
    a = g.standard_normal((n, rank or n))
    return a @ a.T


def random_pd(g, n, cond_max=1e3):
    v, _ = np.linalg.qr(g.standard_normal((n, n)))
    lam = np.exp(g.uniform(0.0, np.log(cond_max), size=n))
    return (v * lam) @ v.T
