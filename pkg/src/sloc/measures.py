"""Finitely supported probability measures on R^n and the Gaussian oracle.

Weights live in log space. A posterior shares the atom array of its prior,
which is what makes the support check in :func:`kl_divergence` structural.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from . import rng as _rng
from .errors import (
    AbsoluteContinuityViolation,
    DimensionMismatch,
    InvalidGeometry,
    InvalidParameter,
    ParseError,
    SupportMismatch,
)
from .linalg import PsdMatrix, as_psd, logdet, psd_inv_sqrt, psd_inverse

MERGE_TOL = 1e-12
GEOMETRIES = ("cube", "sphere", "ising", "clustered")


def _normalize(log_weights: np.ndarray) -> np.ndarray:
    lw = np.asarray(log_weights, dtype=np.float64)
    return lw - logsumexp(lw, axis=-1, keepdims=True)


def _merge_duplicates(atoms: np.ndarray, log_weights: np.ndarray):
    k = atoms.shape[0]
    if k == 1:
        return atoms, log_weights
    order = np.lexsort(atoms.T[::-1])
    srt = atoms[order]
    close = np.max(np.abs(np.diff(srt, axis=0)), axis=1) <= MERGE_TOL
    if not close.any():
        return atoms, log_weights
    # map every atom onto the first-seen member of its run of near-equal rows
    run_id = np.concatenate([[0], np.cumsum(~close)])
    target = np.empty(k, dtype=np.int64)
    for r in np.unique(run_id):
        members = order[run_id == r]
        target[members] = members.min()
    keep = np.unique(target)
    merged = np.array([logsumexp(log_weights[target == j]) for j in keep])
    return atoms[keep], merged


class DiscreteMeasure:
    """Weighted atoms in R^n; atom ``i`` is ``atoms[i]``."""

    __slots__ = ("atoms", "log_weights", "_mean", "_cov")

    def __init__(self, atoms, log_weights=None, *, weights=None, merge: bool = True):
        atoms = np.array(atoms, dtype=np.float64)
        if atoms.ndim == 1:
            atoms = atoms.reshape(-1, 1)
        if atoms.ndim != 2 or atoms.shape[0] < 1 or atoms.shape[1] < 1:
            raise DimensionMismatch(f"atoms must be a non-empty k x n array, got {atoms.shape}")
        if not np.all(np.isfinite(atoms)):
            raise InvalidParameter("atoms must be finite")
        k = atoms.shape[0]
        if log_weights is None and weights is None:
            lw = np.full(k, -np.log(k))
        elif log_weights is not None:
            lw = np.array(log_weights, dtype=np.float64).reshape(-1)
        else:
            w = np.array(weights, dtype=np.float64).reshape(-1)
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise InvalidParameter("weights must be finite and nonnegative")
            with np.errstate(divide="ignore"):
                lw = np.log(w)
        if lw.shape != (k,):
            raise DimensionMismatch(f"{k} atoms but {lw.size} weights")
        if np.any(np.isnan(lw)) or np.any(lw == np.inf) or np.all(lw == -np.inf):
            raise InvalidParameter("log-weights must be finite or -inf, not all -inf")
        if merge:
            atoms, lw = _merge_duplicates(atoms, lw)
        atoms.setflags(write=False)
        self.atoms = atoms
        self.log_weights = _normalize(lw)
        self.log_weights.setflags(write=False)
        self._mean = None
        self._cov = None

    @classmethod
    def _with_log_weights(cls, base: "DiscreteMeasure", log_weights) -> "DiscreteMeasure":
        # same atom array, no merge: the posterior of a prior
        m = cls.__new__(cls)
        m.atoms = base.atoms
        m.log_weights = _normalize(log_weights)
        m.log_weights.setflags(write=False)
        m._mean = None
        m._cov = None
        return m

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @property
    def k(self) -> int:
        return self.atoms.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def __repr__(self):
        return f"DiscreteMeasure(dim={self.dim}, k={self.k})"


@dataclass(frozen=True)
class GaussianMeasure:
    mean: np.ndarray
    covariance: PsdMatrix

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        c = as_psd(self.covariance)
        if c.dim != m.size:
            raise DimensionMismatch("mean and covariance dimensions differ")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "covariance", c)

    @property
    def dim(self) -> int:
        return self.mean.size


def mean(mu: DiscreteMeasure) -> np.ndarray:
    if mu._mean is None:
        mu._mean = mu.weights @ mu.atoms
    return mu._mean


def cov(mu: DiscreteMeasure) -> PsdMatrix:
    if mu._cov is None:
        c = mu.atoms - mean(mu)
        mu._cov = PsdMatrix((c.T * mu.weights) @ c)
    return mu._cov


def same_support(a: DiscreteMeasure, b: DiscreteMeasure) -> bool:
    return a.atoms is b.atoms or (a.atoms.shape == b.atoms.shape and np.array_equal(a.atoms, b.atoms))


def kl_divergence(mu_a: DiscreteMeasure, mu_b: DiscreteMeasure) -> float:
    """Relative entropy ``D(mu_a || mu_b)`` over a shared atom list."""
    if not same_support(mu_a, mu_b):
        raise SupportMismatch("measures do not share the same atom list")
    la, lb = mu_a.log_weights, mu_b.log_weights
    pos = la > -np.inf
    if np.any(lb[pos] == -np.inf):
        raise AbsoluteContinuityViolation("mu_a puts mass where mu_b has none")
    if np.array_equal(la, lb):
        return 0.0
    return float(np.sum(np.exp(la[pos]) * (la[pos] - lb[pos])))


def gaussian_posterior(prior: GaussianMeasure, q, t: float, y) -> GaussianMeasure:
    """Posterior of ``x ~ prior`` given ``y = sqrt(t) x + Q^{1/2} z``."""
    if t < 0:
        raise InvalidParameter("t must be nonnegative")
    if t == 0:
        return prior
    q = as_psd(q)
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if q.dim != prior.dim or y.size != prior.dim:
        raise DimensionMismatch("prior, Q and y dimensions differ")
    s_inv = psd_inverse(prior.covariance).array
    q_inv = psd_inverse(q).array
    post_cov = psd_inverse(s_inv + t * q_inv)
    post_mean = post_cov.array @ (s_inv @ prior.mean + np.sqrt(t) * (q_inv @ y))
    return GaussianMeasure(post_mean, post_cov)


def gaussian_mutual_information(sigma, q, t: float) -> float:
    """``1/2 log det(I + t Q^{-1} Sigma)``, exact for a Gaussian prior."""
    if t < 0:
        raise InvalidParameter("t must be nonnegative")
    sigma, q = as_psd(sigma), as_psd(q)
    if sigma.dim != q.dim:
        raise DimensionMismatch("Sigma and Q dimensions differ")
    h = psd_inv_sqrt(q).array
    if t == 0 or not np.any(sigma.array):
        return 0.0
    return 0.5 * logdet(np.eye(q.dim) + t * (h @ sigma.array @ h))


def geometry_capacity(n: int, geometry: str) -> float:
    if geometry == "ising":
        return 2.0**n
    if geometry == "sphere" and n == 1:
        return 2.0
    if geometry in GEOMETRIES:
        return np.inf
    raise InvalidGeometry(f"unknown geometry {geometry!r}; choose from {GEOMETRIES}")


def random_measure(seed: int, n: int, k: int, geometry: str = "cube") -> DiscreteMeasure:
    """Deterministic random test measure with Dirichlet(1) weights."""
    if n < 1 or k < 1:
        raise InvalidParameter("n and k must be positive")
    cap = geometry_capacity(n, geometry)
    if k > cap:
        raise InvalidGeometry(f"{geometry} geometry in dimension {n} holds at most {int(cap)} atoms")
    g = _rng.stream(seed, _rng.MEASURE, n, k, GEOMETRIES.index(geometry))
    if geometry == "cube":
        atoms = g.uniform(-1.0, 1.0, size=(k, n))
    elif geometry == "sphere":
        if n == 1:
            atoms = np.array([[1.0], [-1.0]])[g.permutation(2)[:k]]
        else:
            v = g.standard_normal((k, n))
            atoms = v / np.linalg.norm(v, axis=1, keepdims=True)
    elif geometry == "ising":
        codes = g.choice(2**n, size=k, replace=False) if n < 63 else None
        if codes is None:
            raise InvalidGeometry("ising geometry supports n < 63")
        bits = (codes[:, None] >> np.arange(n)[None, :]) & 1
        atoms = 2.0 * bits - 1.0
    else:
        n_clusters = min(k, 3)
        centers = g.uniform(-1.0, 1.0, size=(n_clusters, n))
        labels = np.arange(k) % n_clusters
        atoms = centers[labels] + 0.1 * g.standard_normal((k, n))
    w = g.dirichlet(np.ones(k)) if k > 1 else np.ones(1)
    return DiscreteMeasure(atoms, weights=w)


# -- serialization ---------------------------------------------------------

def measure_to_dict(mu: DiscreteMeasure) -> dict:
    return {"dim": mu.dim, "atoms": mu.atoms.tolist(), "weights": mu.weights.tolist()}


def measure_from_dict(d: dict) -> DiscreteMeasure:
    try:
        atoms = np.array(d["atoms"], dtype=np.float64)
        if "weights" in d:
            w = np.array(d["weights"], dtype=np.float64).reshape(-1)
        else:
            w = np.full(len(atoms), 1.0 / max(len(atoms), 1))  # uniform when omitted
        dim = int(d.get("dim", atoms.shape[-1] if atoms.ndim == 2 else 1))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed measure: {exc}") from exc
    if atoms.ndim == 1:
        atoms = atoms.reshape(-1, 1)
    if atoms.ndim != 2 or atoms.shape[1] != dim:
        raise ParseError(f"atoms do not match dim={dim}")
    if w.size != atoms.shape[0]:
        raise ParseError("weights and atoms differ in length")
    total = float(np.sum(w))
    if np.any(w < 0) or abs(total - 1.0) > 1e-6:
        raise ParseError(f"weights must be nonnegative and sum to 1 within 1e-6 (sum={total!r})")
    return DiscreteMeasure(atoms, weights=w / total)


def save_measure(mu: DiscreteMeasure, path) -> None:
    Path(path).write_text(json.dumps(measure_to_dict(mu)) + "\n")


def load_measure(path) -> DiscreteMeasure:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return measure_from_dict(d)


def point_mass(x) -> DiscreteMeasure:
    return DiscreteMeasure(np.atleast_2d(np.asarray(x, dtype=np.float64)))


def two_point(p_plus: float = 0.5, n: int = 1) -> DiscreteMeasure:
    """``p_plus`` on ``+e_1`` and ``1 - p_plus`` on ``-e_1``."""
    e = np.zeros(n)
    e[0] = 1.0
    return DiscreteMeasure(np.stack([e, -e]), weights=[p_plus, 1.0 - p_plus])
