"""Monte-Carlo verification of the Gaussian-channel decomposition bounds.

All estimators share one batch-means engine: ``n_batches`` independent
batches, each drawn from its own ``(seed, batch)`` random stream, reduced in
batch order. Standard errors are the standard deviation of the batch means
over ``sqrt(n_batches)``. Matrix comparisons in Loewner order widen the
measured slack by three times the Frobenius norm of the entrywise standard
errors, which dominates the spectral-norm error of the estimate.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as _rng
from .channel import ERASURE_TOL, UNIFORM12, GaussianChannel, _check_tau_mode, _erasure_mask
from .errors import InsufficientSamples, InvalidParameter
from .linalg import as_psd, logdet, loewner_leq, psd_inv_sqrt
from .measures import DiscreteMeasure, cov, mean

REPORT_TOL = 1e-9
_CHUNK_ELEMS = 1 << 20


@dataclass(frozen=True)
class McConfig:
    seed: int
    n_samples: int = 100_000
    n_batches: int = 50
    tau_mode: object = UNIFORM12
    threads: int = 1

    def __post_init__(self):
        if self.seed is None:
            raise InvalidParameter("seed is required")
        if self.n_samples < 100:
            raise InsufficientSamples(f"need at least 100 samples, got {self.n_samples}")
        if self.n_batches < 30 or self.n_batches > self.n_samples:
            raise InvalidParameter("n_batches must be in [30, n_samples]")
        _check_tau_mode(self.tau_mode)

    @property
    def batch_size(self) -> int:
        return self.n_samples // self.n_batches


@dataclass(frozen=True)
class McEstimate:
    value: object
    std_error: object
    n_samples: int
    seed: int
    n_batches: int
    batch_means: np.ndarray = field(default=None, repr=False, compare=False)

    @classmethod
    def from_batches(cls, batch_means: np.ndarray, cfg: McConfig) -> "McEstimate":
        bm = np.asarray(batch_means, dtype=np.float64)
        value = bm.mean(axis=0)
        se = bm.std(axis=0, ddof=1) / np.sqrt(bm.shape[0])
        if value.ndim == 0:
            value, se = float(value), float(se)
        return cls(value, se, cfg.batch_size * cfg.n_batches, cfg.seed, cfg.n_batches, bm)

    @classmethod
    def exact(cls, value, cfg: McConfig | None = None) -> "McEstimate":
        se = 0.0 if np.ndim(value) == 0 else np.zeros_like(value)
        seed = None if cfg is None else cfg.seed
        return cls(value, se, 0, seed, 0, None)


@dataclass(frozen=True)
class InequalityReport:
    which: str
    lhs_estimate: object
    rhs_bound: object
    slack: float
    ci_slack: float
    passed: bool
    n_samples: int = 0
    seed: int | None = None

    def to_dict(self) -> dict:
        def plain(v):
            return np.asarray(v).tolist()

        return {
            "which": self.which,
            "lhs": plain(self.lhs_estimate),
            "rhs": plain(self.rhs_bound),
            "slack": self.slack,
            "ci_slack": self.ci_slack,
            "pass": self.passed,
            "n_samples": self.n_samples,
            "seed": self.seed,
        }


def _report(which, lhs: McEstimate, rhs, slack: float, ci_slack: float) -> InequalityReport:
    return InequalityReport(
        which, lhs.value, rhs, float(slack), float(ci_slack),
        bool(slack + ci_slack >= -REPORT_TOL), lhs.n_samples, lhs.seed,
    )


def loewner_report(which: str, lhs: McEstimate, rhs) -> InequalityReport:
    rhs = np.asarray(rhs, dtype=np.float64)
    slack = loewner_leq(lhs.value, rhs, tol=REPORT_TOL).slack
    return _report(which, lhs, rhs, slack, 3.0 * float(np.linalg.norm(lhs.std_error)))


# -- batch engine ---------------------------------------------------------

def _chunks(size: int, k: int):
    step = max(1, _CHUNK_ELEMS // max(k, 1))
    for start in range(0, size, step):
        yield slice(start, min(size, start + step))


def _run_batches(cfg: McConfig, batch_fn, variant: int = 0) -> np.ndarray:
    """``batch_fn(rng, size)`` returns per-draw values; result is batch means stacked."""

    def one(b):
        vals = batch_fn(_rng.stream(cfg.seed, _rng.CHANNEL, variant, b), cfg.batch_size)
        return np.mean(vals, axis=0)

    return np.stack(_rng.fan_out(one, range(cfg.n_batches), cfg.threads))


def _eval_posterior(ch: GaussianChannel, batch, integrands):
    """Evaluate each integrand on the posteriors of a channel batch, chunked over draws."""
    out = [[] for _ in integrands]
    ybar_all = np.sqrt(batch.tau)[:, None] * batch.y
    for sl in _chunks(len(batch), ch.mu.k):
        log_w = ch.tilt(batch.tau[sl], ybar_all[sl])
        a, covs = ch.moments(log_w)
        for o, f in zip(out, integrands):
            o.append(f(batch.x[sl], log_w, a, covs))
    return [np.concatenate(o, axis=0) for o in out]


def _posterior_mc(mu, q, cfg: McConfig, integrands: dict, variant: int = 0) -> dict:
    ch = GaussianChannel(mu, q)
    fns = list(integrands.values())
    width = []

    def batch_fn(g, size):
        vals = _eval_posterior(ch, ch.sample(g, size, cfg.tau_mode), [f(ch) for f in fns])
        width[:] = [v.shape[1:] for v in vals]
        return np.concatenate([v.reshape(v.shape[0], -1) for v in vals], axis=1)

    bm = _run_batches(cfg, batch_fn, variant)
    res, col = {}, 0
    for name, shape in zip(integrands, width):
        d = int(np.prod(shape))
        res[name] = McEstimate.from_batches(bm[:, col:col + d].reshape((bm.shape[0],) + shape), cfg)
        col += d
    return res


def _i_cov(ch):
    return lambda x, log_w, a, covs: covs


def _i_cov_qcov(ch):
    return lambda x, log_w, a, covs: np.einsum("pij,jk,pkl->pil", covs, ch.q_inv, covs)


def _i_mi(ch):
    return lambda x, log_w, a, covs: ch.kl_from_prior(log_w)


def _i_sq_err(r):
    return lambda ch: lambda x, log_w, a, covs: np.einsum("pi,ij,pj->p", x - a, r, x - a)


def _i_trace_pair(r):
    # Tr(Cov Q^{-1} Cov R) per draw
    return lambda ch: lambda x, log_w, a, covs: np.einsum(
        "pij,jk,pkl,li->p", covs, ch.q_inv, covs, r)


# -- estimators -----------------------------------------------------------

def estimate_mixture_cov(mu: DiscreteMeasure, q, cfg: McConfig) -> McEstimate:
    """``E_theta Cov(mu_theta)``."""
    return _posterior_mc(mu, q, cfg, {"cov": _i_cov})["cov"]


def estimate_cov_qcov(mu: DiscreteMeasure, q, cfg: McConfig) -> McEstimate:
    """``E_theta Cov(mu_theta) Q^{-1} Cov(mu_theta)``."""
    return _posterior_mc(mu, q, cfg, {"cqc": _i_cov_qcov})["cqc"]


def estimate_mutual_information(mu: DiscreteMeasure, q, cfg: McConfig) -> McEstimate:
    """``I(theta; x) = E_theta D(mu_theta || mu)``."""
    return _posterior_mc(mu, q, cfg, {"mi": _i_mi})["mi"]


def entropy_upper_bound(mu: DiscreteMeasure, q, t: float = 2.0) -> float:
    """``1/2 log det(I + t Q^{-1} Cov(mu))``; ``t = 2`` covers every tau in [1, 2]."""
    h = psd_inv_sqrt(as_psd(q)).array
    c = cov(mu).array
    if not np.any(c):
        return 0.0
    return 0.5 * logdet(np.eye(mu.dim) + t * (h @ c @ h))


def mmse(mu: DiscreteMeasure, q, t: float, r, cfg: McConfig) -> McEstimate:
    r = np.atleast_2d(np.asarray(r, dtype=np.float64))
    if t < 0:
        raise InvalidParameter("t must be nonnegative")
    if t == 0:
        return McEstimate.exact(float(np.trace(r @ cov(mu).array)), cfg)
    cfg = replace(cfg, tau_mode=float(t))
    return _posterior_mc(mu, q, cfg, {"mmse": _i_sq_err(r)})["mmse"]


@dataclass(frozen=True)
class DerivativeCheck:
    fd: float
    fd_std_error: float
    identity_rhs: McEstimate
    difference_std_error: float
    tolerance: float
    agree: bool


def mmse_derivative_check(mu, q, t: float, r, cfg: McConfig, delta: float = 1e-3,
                          curvature_scale: float | None = None) -> DerivativeCheck:
    """Central difference of mmse at ``t`` (common random numbers) against
    ``-E Tr{Cov(mu_t) Q^{-1} Cov(mu_t) R}`` on the same draws."""
    if not 1e-4 <= delta <= 0.1:
        raise InvalidParameter("delta must lie in [1e-4, 0.1]")
    if t - delta < 0:
        raise InvalidParameter("need t - delta >= 0")
    r = np.atleast_2d(np.asarray(r, dtype=np.float64))
    ch = GaussianChannel(mu, q)
    sq_err = _i_sq_err(r)(ch)
    trace_pair = _i_trace_pair(r)(ch)

    def at(s, batch, sl):
        ybar = s * batch.x[sl] + np.sqrt(s) * ch.noise(batch.z[sl])
        log_w = ch.tilt(s, ybar)
        a, covs = ch.moments(log_w)
        return log_w, a, covs

    def batch_fn(g, size):
        batch = ch.sample(g, size, float(t))
        cols = []
        for sl in _chunks(size, mu.k):
            x = batch.x[sl]
            e_hi = sq_err(x, *at(t + delta, batch, sl))
            e_lo = sq_err(x, *at(t - delta, batch, sl))
            fd = (e_hi - e_lo) / (2.0 * delta)
            rhs = -trace_pair(x, *at(t, batch, sl))
            cols.append(np.stack([fd, rhs, fd - rhs], axis=1))
        return np.concatenate(cols)

    bm = _run_batches(replace(cfg, tau_mode=float(t)), batch_fn)
    fd = McEstimate.from_batches(bm[:, 0], cfg)
    rhs = McEstimate.from_batches(bm[:, 1], cfg)
    diff = McEstimate.from_batches(bm[:, 2], cfg)
    c = float(np.trace(r @ cov(mu).array)) if curvature_scale is None else curvature_scale
    tol = 3.0 * diff.std_error + c * delta**2 + REPORT_TOL
    return DerivativeCheck(fd.value, fd.std_error, rhs, diff.std_error, tol,
                           bool(abs(fd.value - rhs.value) <= tol))


@dataclass(frozen=True)
class IntegratedCheck:
    integral: McEstimate
    mmse1: McEstimate
    mmse2: McEstimate
    difference_std_error: float
    trace_bound: float
    passed: bool


def integrated_identity_check(mu, q, r, cfg: McConfig) -> IntegratedCheck:
    """``int_1^2 E Tr{Cov Q^{-1} Cov R} dt`` against ``mmse(1) - mmse(2)`` and ``Tr(R Cov(mu))``."""
    r = np.atleast_2d(np.asarray(r, dtype=np.float64))
    integral = _posterior_mc(mu, q, replace(cfg, tau_mode=UNIFORM12),
                             {"int": _i_trace_pair(r)}, variant=1)["int"]
    ch = GaussianChannel(mu, q)
    sq_err = _i_sq_err(r)(ch)

    def batch_fn(g, size):
        batch = ch.sample(g, size, 1.0)
        cols = []
        for sl in _chunks(size, mu.k):
            e = []
            for s in (1.0, 2.0):
                ybar = s * batch.x[sl] + np.sqrt(s) * ch.noise(batch.z[sl])
                log_w = ch.tilt(s, ybar)
                a, covs = ch.moments(log_w)
                e.append(sq_err(batch.x[sl], log_w, a, covs))
            cols.append(np.stack([e[0], e[1], e[0] - e[1]], axis=1))
        return np.concatenate(cols)

    bm = _run_batches(cfg, batch_fn, variant=2)
    m1 = McEstimate.from_batches(bm[:, 0], cfg)
    m2 = McEstimate.from_batches(bm[:, 1], cfg)
    diff = McEstimate.from_batches(bm[:, 2], cfg)
    bound = float(np.trace(r @ cov(mu).array))
    combined = float(np.hypot(integral.std_error, diff.std_error))
    ok = (abs(integral.value - diff.value) <= 3.0 * combined + REPORT_TOL
          and integral.value <= bound + 3.0 * integral.std_error + REPORT_TOL)
    return IntegratedCheck(integral, m1, m2, diff.std_error, bound, bool(ok))


# -- combined bound reports ------------------------------------------------

def _three_reports(mu, q, cfg, cov1_bound_scale=1.0, bound_scale=1.0, entropy_t=2.0):
    q = as_psd(q)
    est = _posterior_mc(mu, q, cfg, {"cov": _i_cov, "cqc": _i_cov_qcov, "mi": _i_mi})
    cov1 = loewner_report("cov1", est["cov"], bound_scale * cov1_bound_scale * q.array)
    cov2 = loewner_report("cov2", est["cqc"], bound_scale * cov(mu).array)
    mi = est["mi"]
    bound = bound_scale * entropy_upper_bound(mu, q, entropy_t)
    entropy = _report("entropy", mi, bound, min(bound - mi.value, mi.value), 3.0 * mi.std_error)
    return {"cov1": cov1, "entropy": entropy, "cov2": cov2}


def verify_theorem(mu: DiscreteMeasure, q, cfg: McConfig, *, cov1_bound_scale: float = 1.0) -> dict:
    """Check the covariance bound, the entropy bound and the ``Cov Q^{-1} Cov`` bound.

    ``cov1_bound_scale`` rescales only the right-hand side of the first
    comparison (the estimator still runs at ``Q``); values below one are a
    deliberate corruption used to confirm the checker can reject.
    """
    return _three_reports(mu, q, cfg, cov1_bound_scale=cov1_bound_scale)


@dataclass(frozen=True)
class SweepPoint:
    t: float
    reports: dict
    passed: bool


@dataclass(frozen=True)
class SweepReport:
    grid: list
    M: float
    points: list
    pass_fraction: float
    guaranteed_fraction: float


def fixed_t_sweep(mu, q, grid, M: float, cfg: McConfig) -> SweepReport:
    """At each fixed ``t`` check the three bounds relaxed by a factor ``M``."""
    grid = [float(t) for t in grid]
    if any(not 1.0 <= t <= 2.0 for t in grid) or not grid:
        raise InvalidParameter("grid must be a non-empty subset of [1, 2]")
    if not M > 0:
        raise InvalidParameter("M must be positive")
    points = []
    for t in grid:
        reps = _three_reports(mu, q, replace(cfg, tau_mode=t), bound_scale=M)
        points.append(SweepPoint(t, reps, all(r.passed for r in reps.values())))
    frac = sum(p.passed for p in points) / len(points)
    return SweepReport(grid, float(M), points, frac, max(0.0, 1.0 - 3.0 / M))


# -- erasure (pinning) channel --------------------------------------------

def estimate_pinning(mu: DiscreteMeasure, epsilon: float, cfg: McConfig) -> dict:
    """``E D(mu_theta || mu)`` and ``E Cov(mu_theta)`` when ``theta`` reveals each
    coordinate of ``x`` independently with probability ``epsilon``.

    The posterior is the prior restricted to atoms matching the revealed
    coordinates, so its divergence from the prior is ``-log mu(consistent)``.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise InvalidParameter("epsilon must lie in [0, 1]")
    k, n = mu.k, mu.dim
    w0 = mu.weights
    atoms = mu.atoms
    centered = atoms - mean(mu)
    cdf = np.cumsum(w0)

    def batch_fn(g, size):
        idx = np.minimum(np.searchsorted(cdf, g.random(size) * cdf[-1], side="right"), k - 1)
        mask = _erasure_mask(g, epsilon, (size, n))
        out = []
        for sl in _chunks(size, k * n):
            x = atoms[idx[sl]]
            m = mask[sl]
            mismatch = (np.abs(atoms[None, :, :] - x[:, None, :]) > ERASURE_TOL) & m[:, None, :]
            ok = ~mismatch.any(axis=2)
            full = ok.all(axis=1)
            # nothing ruled out: exactly the prior, not a rounded renormalization of it
            mass = np.where(full, 1.0, ok @ w0)
            w = np.where(full[:, None], w0, np.where(ok, w0, 0.0) / mass[:, None])
            ac = w @ centered
            covs = np.einsum("pk,ki,kj->pij", w, centered, centered) - ac[:, :, None] * ac[:, None, :]
            out.append(np.concatenate([np.where(full, 0.0, -np.log(mass))[:, None], covs.reshape(-1, n * n)], axis=1))
        return np.concatenate(out)

    bm = _run_batches(cfg, batch_fn, variant=3)
    return {
        "mi": McEstimate.from_batches(bm[:, 0], cfg),
        "cov": McEstimate.from_batches(bm[:, 1:].reshape(-1, n, n), cfg),
    }
