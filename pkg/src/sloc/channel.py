"""Observation channels: the Gaussian channel with exact posterior tilting and
the erasure (pinning) channel, plus the ML and Bayes estimators.

Tilting is written in terms of ``ybar = sqrt(t) * y`` so that the same routine
serves both the channel posterior at SNR ``t`` and the localization process
at time ``t``. Atoms are centered at the prior mean before tilting; the shift
only changes the normalizing constant and keeps the exponent small when Q is
badly conditioned.

Batch routines take a leading batch axis and use ``np.einsum`` so that each
row is computed independently of the batch it is in.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyPosterior, InvalidParameter, NonFiniteInput
from .linalg import as_psd, psd_inverse, psd_sqrt
from .measures import DiscreteMeasure, mean

UNIFORM12 = "uniform12"
ERASURE_TOL = 1e-12


def _check_tau_mode(tau_mode):
    if tau_mode == UNIFORM12:
        return tau_mode
    try:
        t = float(tau_mode)
    except (TypeError, ValueError):
        raise InvalidParameter(f"tau_mode must be {UNIFORM12!r} or a fixed t >= 0, got {tau_mode!r}")
    if not t >= 0:
        raise InvalidParameter("fixed t must be nonnegative")
    return t


def _normalize_rows(lw: np.ndarray) -> np.ndarray:
    top = np.max(lw, axis=1, keepdims=True)
    shifted = lw - top
    return shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))


class GaussianChannel:
    """Precomputed tilt data for a prior ``mu`` observed through noise covariance ``Q``."""

    def __init__(self, mu: DiscreteMeasure, q):
        q = as_psd(q)
        if q.dim != mu.dim:
            raise DimensionMismatch(f"Q is {q.dim}x{q.dim} but the measure lives in R^{mu.dim}")
        self.mu = mu
        self.q = q
        self.q_inv = psd_inverse(q).array
        self.q_sqrt = psd_sqrt(q).array
        self.center = mean(mu)
        self.centered = mu.atoms - self.center
        self.cq = np.einsum("kn,nm->km", self.centered, self.q_inv)
        self.quad = np.einsum("km,km->k", self.cq, self.centered)
        self.log_w0 = np.asarray(mu.log_weights)
        self._cdf = np.cumsum(mu.weights)

    @property
    def dim(self) -> int:
        return self.mu.dim

    # -- sampling ---------------------------------------------------------
    def draw_atoms(self, u: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self._cdf, u * self._cdf[-1], side="right")
        return np.minimum(idx, self.mu.k - 1)

    def noise(self, z: np.ndarray) -> np.ndarray:
        """``Q^{1/2} z`` row-wise."""
        return np.einsum("pn,mn->pm", z, self.q_sqrt)

    def sample(self, rng: np.random.Generator, size: int, tau_mode=UNIFORM12) -> "ChannelBatch":
        tau_mode = _check_tau_mode(tau_mode)
        idx = self.draw_atoms(rng.random(size))
        if tau_mode == UNIFORM12:
            tau = 1.0 + rng.random(size)
        else:
            tau = np.full(size, tau_mode)
        z = rng.standard_normal((size, self.dim))
        x = self.mu.atoms[idx]
        y = np.sqrt(tau)[:, None] * x + self.noise(z)
        return ChannelBatch(idx, x, tau, z, y)

    # -- tilting ----------------------------------------------------------
    def tilt(self, t, ybar) -> np.ndarray:
        """Normalized posterior log-weights, shape ``(P, k)``, for ``ybar`` of shape ``(P, n)``."""
        ybar = np.atleast_2d(np.asarray(ybar, dtype=np.float64))
        if np.ndim(t) == 0:
            t = float(t)
            lw = self.log_w0 - 0.5 * t * self.quad + np.einsum("pn,kn->pk", ybar - t * self.center, self.cq)
        else:
            t = np.asarray(t, dtype=np.float64)[:, None]
            lw = self.log_w0 - 0.5 * t * self.quad + np.einsum("pn,kn->pk", ybar - t * self.center, self.cq)
        return _normalize_rows(lw)

    def barycenter(self, log_w: np.ndarray) -> np.ndarray:
        return np.einsum("pk,kn->pn", np.exp(log_w), self.centered) + self.center

    def moments(self, log_w: np.ndarray):
        """Posterior means ``(P, n)`` and covariances ``(P, n, n)`` from log-weights."""
        w = np.exp(log_w)
        ac = np.einsum("pk,kn->pn", w, self.centered)
        m2 = np.einsum("pk,ki,kj->pij", w, self.centered, self.centered)
        covs = m2 - ac[:, :, None] * ac[:, None, :]
        return ac + self.center, 0.5 * (covs + np.swapaxes(covs, 1, 2))

    def kl_from_prior(self, log_w: np.ndarray) -> np.ndarray:
        w = np.exp(log_w)
        diff = np.where(w > 0, log_w - self.log_w0, 0.0)
        return np.einsum("pk,pk->p", w, diff)

    def posterior_ybar(self, t: float, ybar) -> DiscreteMeasure:
        if t == 0:
            return self.mu
        ybar = np.asarray(ybar, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(ybar)):
            raise NonFiniteInput("observation contains non-finite entries")
        if ybar.size != self.dim:
            raise DimensionMismatch("observation has the wrong dimension")
        return DiscreteMeasure._with_log_weights(self.mu, self.tilt(t, ybar[None, :])[0])


@dataclass(frozen=True)
class ChannelBatch:
    atom_index: np.ndarray
    x: np.ndarray
    tau: np.ndarray
    z: np.ndarray
    y: np.ndarray

    def __len__(self):
        return self.atom_index.size

    def __getitem__(self, i) -> "ChannelDraw":
        return ChannelDraw(self.x[i], int(self.atom_index[i]), float(self.tau[i]), self.z[i], self.y[i])


@dataclass(frozen=True)
class ChannelDraw:
    """One channel use: ``theta = (y, tau)`` together with the hidden ``x`` and ``z``."""

    x: np.ndarray
    atom_index: int
    tau: float
    z: np.ndarray
    y: np.ndarray


def sample_channel(mu: DiscreteMeasure, q, tau_mode, rng: np.random.Generator) -> ChannelDraw:
    return GaussianChannel(mu, q).sample(rng, 1, tau_mode)[0]


def posterior(mu: DiscreteMeasure, q, t: float, y) -> DiscreteMeasure:
    """Law of ``x`` given ``y = sqrt(t) x + Q^{1/2} z``; keeps the prior's atom list."""
    if t < 0:
        raise InvalidParameter("t must be nonnegative")
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(y)):
        raise NonFiniteInput("y contains non-finite entries")
    ch = GaussianChannel(mu, q)
    if t == 0:
        return mu
    return ch.posterior_ybar(t, np.sqrt(t) * y)


def bayes_estimate(mu: DiscreteMeasure, q, t: float, y) -> np.ndarray:
    return mean(posterior(mu, q, t, y))


def ml_estimate(y, t: float) -> np.ndarray:
    if not t > 0:
        raise InvalidParameter("ML estimate needs t > 0")
    return np.asarray(y, dtype=np.float64) / np.sqrt(t)


# -- erasure channel ------------------------------------------------------

@dataclass(frozen=True)
class ErasureDraw:
    mask: np.ndarray
    revealed_values: np.ndarray
    epsilon: float

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        vals = np.asarray(self.revealed_values, dtype=np.float64).reshape(-1)
        if vals.size != int(mask.sum()):
            raise DimensionMismatch("revealed_values must match the number of revealed coordinates")
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "revealed_values", vals)


def _erasure_mask(rng: np.random.Generator, epsilon: float, shape) -> np.ndarray:
    if not 0.0 <= epsilon <= 1.0:
        raise InvalidParameter("epsilon must lie in [0, 1]")
    if epsilon == 0.0:
        return np.zeros(shape, dtype=bool)
    if epsilon == 1.0:
        return np.ones(shape, dtype=bool)
    return rng.random(shape) < epsilon


def sample_erasure(mu: DiscreteMeasure, epsilon: float, rng: np.random.Generator):
    """Draw ``x ~ mu`` and reveal each coordinate independently with probability ``epsilon``."""
    if not 0.0 <= epsilon <= 1.0:
        raise InvalidParameter("epsilon must lie in [0, 1]")
    cdf = np.cumsum(mu.weights)
    i = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), mu.k - 1)
    x = mu.atoms[i].copy()
    mask = _erasure_mask(rng, epsilon, mu.dim)
    return x, ErasureDraw(mask, x[mask], float(epsilon))


def erasure_consistent(mu: DiscreteMeasure, mask: np.ndarray, revealed: np.ndarray) -> np.ndarray:
    """Boolean ``(k,)`` array of atoms matching the revealed coordinates."""
    if mask.size != mu.dim:
        raise DimensionMismatch("mask has the wrong dimension")
    if not mask.any():
        return np.ones(mu.k, dtype=bool)
    return np.all(np.abs(mu.atoms[:, mask] - revealed) <= ERASURE_TOL, axis=1)


def erasure_posterior(mu: DiscreteMeasure, draw: ErasureDraw) -> DiscreteMeasure:
    if not draw.mask.any():
        return mu
    ok = erasure_consistent(mu, draw.mask, draw.revealed_values) & (mu.log_weights > -np.inf)
    if not ok.any():
        raise EmptyPosterior("no atom is consistent with the revealed coordinates")
    return DiscreteMeasure._with_log_weights(mu, np.where(ok, mu.log_weights, -np.inf))
