"""Closed-form and quadrature references for one-dimensional cross-checks.

Two-point prior ``P(x = +1) = p``, ``P(x = -1) = 1 - p``, scalar noise
variance ``q``. Given ``y = sqrt(t) x + sqrt(q) z`` the posterior log-odds are
``logit(p) + 2 sqrt(t) y / q``, so every posterior functional is a scalar
function of ``y`` and the expectations over ``y`` (a two-component Gaussian
mixture) are computed by Gauss-Hermite quadrature, 200 nodes per component.
The average over ``tau ~ Unif[1, 2]`` uses Gauss-Legendre nodes.

None of this shares code with the Monte-Carlo estimators.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss

HERMITE_NODES = 200
LEGENDRE_NODES = 64


def _posterior_plus(y, t, p, q):
    logit = math.log(p / (1.0 - p)) + 2.0 * math.sqrt(t) * y / q
    return 0.5 * (1.0 + np.tanh(0.5 * logit))


def _functionals(y, t, p, q):
    w = _posterior_plus(y, t, p, q)
    m = 2.0 * w - 1.0
    var = 1.0 - m * m
    with np.errstate(divide="ignore", invalid="ignore"):
        kl = (np.where(w > 0, w * (np.log(w) - math.log(p)), 0.0)
              + np.where(w < 1, (1 - w) * (np.log1p(-w) - math.log(1 - p)), 0.0))
    return {"cov": var, "cqc": var * var / q, "mi": kl, "mmse": var, "mean": m}


def two_point_expectation(quantity: str, t: float, p: float = 0.5, q: float = 1.0) -> float:
    """``E f(posterior)`` at fixed SNR ``t`` for ``quantity`` in cov, cqc, mi, mmse."""
    nodes, weights = hermgauss(HERMITE_NODES)
    total = 0.0
    for sign, prob in ((1.0, p), (-1.0, 1.0 - p)):
        y = sign * math.sqrt(t) + math.sqrt(2.0 * q) * nodes
        total += prob * float(np.sum(weights * _functionals(y, t, p, q)[quantity])) / math.sqrt(math.pi)
    return total


def two_point_tau_average(quantity: str, p: float = 0.5, q: float = 1.0) -> float:
    """Same functional averaged over ``tau ~ Unif[1, 2]``."""
    nodes, weights = leggauss(LEGENDRE_NODES)
    taus = 1.5 + 0.5 * nodes
    return float(sum(0.5 * w * two_point_expectation(quantity, s, p, q) for s, w in zip(taus, weights)))


def two_point_mmse_derivative(t: float, p: float = 0.5, q: float = 1.0, h: float = 1e-4) -> float:
    """Five-point finite difference of the quadrature mmse curve."""
    f = lambda s: two_point_expectation("mmse", s, p, q)
    return (-f(t + 2 * h) + 8 * f(t + h) - 8 * f(t - h) + f(t - 2 * h)) / (12.0 * h)


def binary_awgn_mutual_information(snr: float) -> float:
    """Mutual information (nats) of a uniform +-1 input over ``y = sqrt(snr) x + z``,
    via ``I = snr - E log cosh(snr + sqrt(snr) z)``."""
    nodes, weights = hermgauss(HERMITE_NODES)
    u = snr + math.sqrt(2.0 * snr) * nodes
    logcosh = np.abs(u) + np.log1p(np.exp(-2.0 * np.abs(u))) - math.log(2.0)
    return snr - float(np.sum(weights * logcosh)) / math.sqrt(math.pi)
