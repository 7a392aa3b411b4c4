"""Simulation of the measure-valued localization process ``t -> mu_t``.

Three drivers sample the same path law:

``exact_channel``
    draw ``x ~ mu`` and integrate ``dybar = x dt + Q^{1/2} dB`` with exact
    Gaussian increments; ``mu_t`` is the tilt of ``mu`` by ``ybar_t``.
``innovations``
    never touches ``x``: ``dybar = a_t dt + Q^{1/2} dW`` (Euler-Maruyama),
    where ``a_t`` is the barycenter of the tilt at the current ``ybar``.
``likelihood_sde``
    Euler-Maruyama on ``log L_t(x_i)`` with one shared ``dW`` per step.

Every path ``p`` owns the random stream ``(seed, PATH, p)`` and consumes it
one step at a time, so a path does not depend on ``record_every``, on the
other paths simulated alongside it, or on the number of worker threads.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp
from scipy.stats import ks_2samp

from . import rng as _rng
from .channel import GaussianChannel
from .errors import InsufficientPaths, InvalidParameter, StepTooLarge
from .linalg import psd_inv_sqrt
from .measures import DiscreteMeasure, mean

DRIVERS = ("exact_channel", "innovations", "likelihood_sde")
MAX_LOG_STEP = 50.0
_PATH_CHUNK = 512
_STEP_BLOCK = 1024


@dataclass(frozen=True)
class PathConfig:
    seed: int
    dt: float = 1e-3
    t_max: float = 50.0
    driver: str = "exact_channel"
    record_every: int = 100
    extra_times: tuple = ()

    def __post_init__(self):
        if self.seed is None:
            raise InvalidParameter("seed is required")
        if not (0 < self.dt <= self.t_max):
            raise InvalidParameter("need 0 < dt <= t_max")
        if self.t_max / self.dt > 1e7:
            raise InvalidParameter("t_max / dt must not exceed 1e7")
        if self.driver not in DRIVERS:
            raise InvalidParameter(f"driver must be one of {DRIVERS}")
        if self.record_every < 1:
            raise InvalidParameter("record_every must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(np.ceil(self.t_max / self.dt - 1e-9))

    def record_steps(self) -> np.ndarray:
        steps = np.arange(0, self.n_steps + 1, self.record_every)
        extra = [min(self.n_steps, int(round(t / self.dt))) for t in self.extra_times if t >= 0]
        return np.union1d(np.append(steps, self.n_steps), np.asarray(extra, dtype=np.int64))


@dataclass(frozen=True)
class PathState:
    t: float
    ybar: np.ndarray
    log_weights: np.ndarray
    a_t: np.ndarray
    log_L: np.ndarray | None = None


@dataclass
class PathEnsemble:
    """Recorded states of many paths: arrays indexed ``[path, record, ...]``."""

    mu: DiscreteMeasure
    cfg: PathConfig
    times: np.ndarray
    ybar: np.ndarray
    log_weights: np.ndarray
    a: np.ndarray
    log_L: np.ndarray | None = None
    x_index: np.ndarray | None = None
    max_normalization_drift: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_paths(self) -> int:
        return self.ybar.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def index_of(self, t: float) -> int:
        r = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[r] - t) > 0.5 * self.cfg.dt + 1e-12:
            raise InvalidParameter(f"t={t} is not a recorded time")
        return r

    def path(self, p: int) -> list[PathState]:
        out = []
        for r, t in enumerate(self.times):
            log_l = None if self.log_L is None else self.log_L[p, r]
            out.append(PathState(float(t), self.ybar[p, r], self.log_weights[p, r], self.a[p, r], log_l))
        return out

    def write_csv(self, p: int, path) -> None:
        n, k = self.mu.dim, self.mu.k
        header = ["t"] + [f"ybar_{i}" for i in range(n)] + [f"w_{i}" for i in range(k)] + [f"a_{i}" for i in range(n)]
        w = self.weights[p]
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(header)
            for r, t in enumerate(self.times):
                row = [t, *self.ybar[p, r], *w[r], *self.a[p, r]]
                wr.writerow([format(float(v), ".17g") for v in row])


# -- drivers --------------------------------------------------------------

class _Noise:
    """Per-path standard normal increments, generated in fixed blocks of steps."""

    def __init__(self, seed: int, paths, n: int, total: int):
        self.gens = [_rng.stream(seed, _rng.PATH, int(p)) for p in paths]
        self.n = n
        self.left = total
        self.buf = None
        self.pos = self.size = 0

    def block(self, steps: int) -> np.ndarray:
        return np.stack([g.standard_normal((steps, self.n)) for g in self.gens])

    def step(self) -> np.ndarray:
        if self.pos == self.size:
            self.size = min(_STEP_BLOCK, self.left)
            self.left -= self.size
            self.buf = self.block(self.size)
            self.pos = 0
        xi = self.buf[:, self.pos]
        self.pos += 1
        return xi


def _draw_x_index(ch: GaussianChannel, seed: int, paths) -> np.ndarray:
    u = np.array([_rng.stream(seed, _rng.PATH_X, int(p)).random() for p in paths])
    return ch.draw_atoms(u)


def _run_exact(ch, cfg, paths, x_index):
    steps = cfg.record_steps()
    rec = np.zeros(cfg.n_steps + 1, dtype=bool)
    rec[steps] = True
    P, n = len(paths), ch.dim
    x = ch.mu.atoms[x_index]
    noise = _Noise(cfg.seed, paths, n, cfg.n_steps)
    sq = np.sqrt(cfg.dt)
    ybar_rec = np.empty((P, steps.size, n))
    ybar_rec[:, 0] = 0.0
    carry = np.zeros((P, 1, n))
    r, done = 1, 0
    while done < cfg.n_steps:
        m = min(_STEP_BLOCK, cfg.n_steps - done)
        xi = noise.block(m)
        incr = x[:, None, :] * cfg.dt + sq * np.einsum("pbn,mn->pbm", xi, ch.q_sqrt)
        # cumsum seeded with the carry reproduces step-by-step accumulation exactly
        traj = np.cumsum(np.concatenate([carry, incr], axis=1), axis=1)[:, 1:]
        hit = np.nonzero(rec[done + 1:done + 1 + m])[0]
        ybar_rec[:, r:r + hit.size] = traj[:, hit]
        r += hit.size
        carry = traj[:, -1:]
        done += m
    times = steps * cfg.dt
    log_w = np.stack([ch.tilt(t, ybar_rec[:, j]) for j, t in enumerate(times)], axis=1)
    a = np.stack([ch.barycenter(log_w[:, j]) for j in range(times.size)], axis=1)
    return times, ybar_rec, log_w, a, None, None


def _run_innovations(ch, cfg, paths, drift_scale=1.0):
    steps = cfg.record_steps()
    rec = np.zeros(cfg.n_steps + 1, dtype=bool)
    rec[steps] = True
    P, n = len(paths), ch.dim
    noise = _Noise(cfg.seed, paths, n, cfg.n_steps)
    sq = np.sqrt(cfg.dt)
    ybar = np.zeros((P, n))
    ybar_rec = np.empty((P, steps.size, n))
    lw_rec = np.empty((P, steps.size, ch.mu.k))
    a_rec = np.empty((P, steps.size, n))
    r = 0
    for j in range(cfg.n_steps + 1):
        t = j * cfg.dt
        log_w = ch.tilt(t, ybar)
        a = ch.barycenter(log_w)
        if rec[j]:
            ybar_rec[:, r], lw_rec[:, r], a_rec[:, r] = ybar, log_w, a
            r += 1
        if j == cfg.n_steps:
            break
        ybar = ybar + drift_scale * a * cfg.dt + sq * ch.noise(noise.step())
    return steps * cfg.dt, ybar_rec, lw_rec, a_rec, None, None


def _run_likelihood(ch, cfg, paths):
    steps = cfg.record_steps()
    rec = np.zeros(cfg.n_steps + 1, dtype=bool)
    rec[steps] = True
    P, n, k = len(paths), ch.dim, ch.mu.k
    noise = _Noise(cfg.seed, paths, n, cfg.n_steps)
    sq = np.sqrt(cfg.dt)
    h = psd_inv_sqrt(ch.q).array
    log_l = np.zeros((P, k))
    ybar = np.zeros((P, n))
    ybar_rec = np.empty((P, steps.size, n))
    lw_rec = np.empty((P, steps.size, k))
    ll_rec = np.empty((P, steps.size, k))
    a_rec = np.empty((P, steps.size, n))
    drift = np.zeros(P)
    log_w = ch.log_w0 - logsumexp(ch.log_w0) + np.zeros((P, 1))
    r = 0
    for j in range(cfg.n_steps + 1):
        a = ch.barycenter(log_w)
        if rec[j]:
            ybar_rec[:, r], lw_rec[:, r], ll_rec[:, r], a_rec[:, r] = ybar, log_w, log_l, a
            r += 1
        if j == cfg.n_steps:
            break
        dw = sq * noise.step()
        g = np.einsum("pn,mn->pm", dw, h)
        dev = ch.centered[None, :, :] - (a - ch.center)[:, None, :]
        quad = np.einsum("pki,ij,pkj->pk", dev, ch.q_inv, dev)
        step = np.einsum("pkn,pn->pk", dev, g) - 0.5 * quad * cfg.dt
        big = np.max(np.abs(np.where(np.isfinite(log_w), step, 0.0)))
        if big > MAX_LOG_STEP:
            raise StepTooLarge(
                f"a single step changed log L by {big:.3g} > {MAX_LOG_STEP:g} at t={j * cfg.dt:.4g}; "
                "reduce dt"
            )
        log_l = log_l + step
        raw = log_w + step
        norm = logsumexp(raw, axis=1)
        drift = np.maximum(drift, np.abs(norm))
        log_w = raw - norm[:, None]
        ybar = ybar + a * cfg.dt + np.einsum("pn,mn->pm", dw, ch.q_sqrt)
    return steps * cfg.dt, ybar_rec, lw_rec, a_rec, ll_rec, drift


def _simulate_chunk(ch, cfg, paths, x_index=None, drift_scale=1.0):
    if cfg.driver == "exact_channel":
        if x_index is None:
            x_index = _draw_x_index(ch, cfg.seed, paths)
        return _run_exact(ch, cfg, paths, np.asarray(x_index)) + (np.asarray(x_index),)
    if cfg.driver == "innovations":
        return _run_innovations(ch, cfg, paths, drift_scale) + (None,)
    return _run_likelihood(ch, cfg, paths) + (None,)


def simulate(mu: DiscreteMeasure, q, cfg: PathConfig, n_paths: int, *,
             x_index=None, drift_scale: float = 1.0, threads: int = 1) -> PathEnsemble:
    """Simulate paths ``0 .. n_paths-1`` with the configured driver.

    ``x_index`` (exact driver only) pins the hidden atom of every path;
    ``drift_scale`` (innovations driver only) multiplies the drift and
    exists to corrupt the driver on purpose.
    """
    if n_paths < 1:
        raise InvalidParameter("n_paths must be positive")
    ch = GaussianChannel(mu, q)
    chunks = [list(range(s, min(n_paths, s + _PATH_CHUNK))) for s in range(0, n_paths, _PATH_CHUNK)]

    def run(paths):
        xi = None if x_index is None else np.broadcast_to(np.asarray(x_index), (len(paths),))
        return _simulate_chunk(ch, cfg, paths, xi, drift_scale)

    parts = _rng.fan_out(run, chunks, threads)
    times = parts[0][0]

    def cat(i):
        return None if parts[0][i] is None else np.concatenate([p[i] for p in parts])

    return PathEnsemble(mu, cfg, times, cat(1), cat(2), cat(3), cat(4), cat(6), cat(5))


def _single(mu, q, cfg, driver, path_index, **kw) -> list[PathState]:
    if cfg.driver != driver:
        cfg = replace(cfg, driver=driver)
    ch = GaussianChannel(mu, q)
    times, ybar, lw, a, ll, _drift, _x = _simulate_chunk(ch, cfg, [path_index], **kw)
    ens = PathEnsemble(mu, cfg, times, ybar, lw, a, ll)
    return ens.path(0)


def simulate_exact(mu, q, x_index: int, cfg: PathConfig, path_index: int = 0) -> list[PathState]:
    if not 0 <= x_index < mu.k:
        raise InvalidParameter("x_index out of range")
    return _single(mu, q, cfg, "exact_channel", path_index, x_index=np.array([x_index]))


def simulate_innovations(mu, q, cfg: PathConfig, path_index: int = 0,
                         drift_scale: float = 1.0) -> list[PathState]:
    return _single(mu, q, cfg, "innovations", path_index, drift_scale=drift_scale)


def simulate_likelihood_sde(mu, q, cfg: PathConfig, path_index: int = 0) -> list[PathState]:
    return _single(mu, q, cfg, "likelihood_sde", path_index)


# -- diagnostics ----------------------------------------------------------

@dataclass(frozen=True)
class Checkpoint:
    t: float
    mean_a: np.ndarray
    se_a: np.ndarray
    deviation_a: np.ndarray
    mean_w: np.ndarray
    se_w: np.ndarray
    mean_L: np.ndarray | None
    passed: bool


@dataclass(frozen=True)
class DiagnosticReport:
    checkpoints: list
    n_paths: int
    passed: bool

    def to_dict(self) -> dict:
        def c(cp):
            return {
                "t": cp.t,
                "mean_a": cp.mean_a.tolist(),
                "se_a": cp.se_a.tolist(),
                "deviation_a": cp.deviation_a.tolist(),
                "mean_w": cp.mean_w.tolist(),
                "se_w": cp.se_w.tolist(),
                "mean_L": None if cp.mean_L is None else cp.mean_L.tolist(),
                "pass": cp.passed,
            }

        return {"n_paths": self.n_paths, "pass": self.passed, "checkpoints": [c(cp) for cp in self.checkpoints]}


def _mean_se(v: np.ndarray):
    m = v.mean(axis=0)
    se = v.std(axis=0, ddof=1) / np.sqrt(v.shape[0])
    return m, se


def martingale_diagnostic(paths: PathEnsemble, checkpoints) -> DiagnosticReport:
    """Flag checkpoints where the path-average barycenter leaves ``mean(mu)`` by more than 3 SE."""
    if paths.n_paths < 100:
        raise InsufficientPaths(f"need >= 100 paths, got {paths.n_paths}")
    target = mean(paths.mu)
    out = []
    for t in checkpoints:
        r = paths.index_of(t)
        ma, sa = _mean_se(paths.a[:, r])
        mw, sw = _mean_se(paths.weights[:, r])
        ml = None if paths.log_L is None else np.exp(paths.log_L[:, r]).mean(axis=0)
        dev = ma - target
        ok = bool(np.all(np.abs(dev) <= 3.0 * sa + 1e-12))
        out.append(Checkpoint(float(paths.times[r]), ma, sa, dev, mw, sw, ml, ok))
    return DiagnosticReport(out, paths.n_paths, all(c.passed for c in out))


@dataclass(frozen=True)
class LocalizationReport:
    hit_times: np.ndarray
    median_hit_time: float
    fraction_localized_by_tmax: float
    threshold: float

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "median_hit_time": self.median_hit_time,
            "fraction_localized_by_tmax": self.fraction_localized_by_tmax,
        }


def localization_diagnostic(paths: PathEnsemble, threshold: float = 0.99) -> LocalizationReport:
    """First recorded time the largest posterior weight reaches ``threshold`` (``inf`` if never)."""
    if not 0.5 < threshold < 1.0:
        raise InvalidParameter("threshold must lie in (0.5, 1)")
    if paths.n_paths < 1:
        raise InsufficientPaths("no paths")
    top = paths.weights.max(axis=2) >= threshold
    hit = np.where(top.any(axis=1), paths.times[np.argmax(top, axis=1)], np.inf)
    return LocalizationReport(hit, float(np.median(hit)), float(np.isfinite(hit).mean()), float(threshold))


def final_weights(paths: PathEnsemble, atom: int = 0) -> np.ndarray:
    return paths.weights[:, -1, atom]


def ks_distance(a, b) -> float:
    return float(ks_2samp(np.ravel(a), np.ravel(b)).statistic)


@dataclass(frozen=True)
class Comparison:
    name: str
    distance: float
    tolerance: float
    passed: bool


@dataclass(frozen=True)
class TestReport:
    __test__ = False  # not a pytest class

    t: float
    channel_t: float
    n_paths: int
    comparisons: list
    passed: bool

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "channel_t": self.channel_t,
            "n_paths": self.n_paths,
            "pass": self.passed,
            "comparisons": [c.__dict__ for c in self.comparisons],
        }


def _moment_stats(u: np.ndarray):
    """Sample mean, covariance and their standard errors for rows of ``u``."""
    N = u.shape[0]
    m, se_m = _mean_se(u)
    d = u - m
    prods = d[:, :, None] * d[:, None, :]
    c = prods.mean(axis=0) * N / (N - 1)
    se_c = prods.std(axis=0, ddof=1) / np.sqrt(N)
    return m, se_m, c, se_c


def compare_samples(name: str, u: np.ndarray, v: np.ndarray) -> list[Comparison]:
    """Two-sample comparison of first and second moments.

    Each moment is compared as a whole: the Frobenius norm of the difference
    against three times the Frobenius norm of the combined standard errors.
    """
    mu_, su, cu, scu = _moment_stats(u)
    mv, sv, cv, scv = _moment_stats(v)
    out = []
    for what, d, s in (("mean", mu_ - mv, np.hypot(su, sv)), ("cov", cu - cv, np.hypot(scu, scv))):
        dist = float(np.linalg.norm(d))
        tol = 3.0 * float(np.linalg.norm(s)) + 1e-12
        out.append(Comparison(f"{name}_{what}", dist, tol, dist <= tol))
    return out


def law_equivalence_test(mu, q, t: float, n_paths: int, seed: int, *,
                         channel_t: float | None = None, dt: float = 1e-3,
                         threads: int = 1) -> TestReport:
    """Compare ``ybar_t`` of the exact driver with ``sqrt(t) * y`` from the fixed-t channel.

    ``channel_t`` defaults to ``t``; setting it elsewhere is a deliberate mismatch.
    """
    if not t > 0:
        raise InvalidParameter("t must be positive")
    if n_paths < 1000:
        raise InsufficientPaths("law equivalence needs at least 1000 paths")
    tc = float(t if channel_t is None else channel_t)
    cfg = PathConfig(seed, dt=min(dt, t), t_max=t, driver="exact_channel", record_every=10**9)
    ens = simulate(mu, q, cfg, n_paths, threads=threads)
    ybar_path = ens.ybar[:, -1]
    a_path = ens.a[:, -1]
    ch = GaussianChannel(mu, q)
    batch = ch.sample(_rng.stream(seed, _rng.LAW), n_paths, tc)
    ybar_chan = np.sqrt(tc) * batch.y
    a_chan = ch.moments(ch.tilt(tc, ybar_chan))[0]
    comps = compare_samples("ybar", ybar_path, ybar_chan) + compare_samples("posterior_mean", a_path, a_chan)
    return TestReport(float(t), tc, n_paths, comps, all(c.passed for c in comps))
