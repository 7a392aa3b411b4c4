"""Small dense symmetric / PSD matrix algebra.

Matrices are immutable. ``PsdMatrix`` eagerly computes and caches its
eigendecomposition (``numpy.linalg.eigh``), and every derived quantity
(square root, inverse, log-determinant) is read off the cached spectrum.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotPsd, SingularMatrix

SYM_TOL = 1e-12
PSD_TOL = 1e-10
RECON_TOL = 1e-8
INV_FLOOR_REL = 1e-12


def _as_square(entries) -> np.ndarray:
    a = np.array(entries, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


class SymMatrix:
    """Symmetric matrix; the input is symmetrized on construction."""

    __slots__ = ("_a",)

    def __init__(self, entries):
        a = entries.array if isinstance(entries, SymMatrix) else _as_square(entries)
        scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
        if np.max(np.abs(a - a.T)) > 1e-6 * scale:
            raise ValueError("matrix is not symmetric")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        self._a = a

    @property
    def array(self) -> np.ndarray:
        return self._a

    @property
    def dim(self) -> int:
        return self._a.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self._a if dtype is None else self._a.astype(dtype)

    def __repr__(self):
        return f"{type(self).__name__}({self._a.tolist()!r})"


class PsdMatrix(SymMatrix):
    """Symmetric positive-semidefinite matrix with cached eigendecomposition.

    Eigenvalues in ``[-PSD_TOL * scale, 0)`` are clamped to zero, anything
    more negative raises :class:`NotPsd`.
    """

    __slots__ = ("_vals", "_vecs")

    def __init__(self, entries):
        super().__init__(entries)
        vals, vecs = np.linalg.eigh(self._a)
        scale = max(1.0, float(vals[-1]))
        if vals[0] < -PSD_TOL * scale:
            raise NotPsd(f"smallest eigenvalue {vals[0]:.3e} is below -{PSD_TOL:g}*{scale:g}")
        vals = np.clip(vals, 0.0, None)
        recon = (vecs * vals) @ vecs.T
        if np.max(np.abs(recon - self._a)) > RECON_TOL * scale:
            raise NotPsd("eigendecomposition failed to reconstruct the matrix")
        vals.setflags(write=False)
        vecs.setflags(write=False)
        self._vals = vals
        self._vecs = vecs

    @classmethod
    def from_eig(cls, vals, vecs) -> "PsdMatrix":
        return cls((np.asarray(vecs) * np.asarray(vals)) @ np.asarray(vecs).T)

    @property
    def eigenvalues(self) -> np.ndarray:
        """Ascending eigenvalues (clamped at zero)."""
        return self._vals

    @property
    def eigenvectors(self) -> np.ndarray:
        return self._vecs

    @property
    def inv_floor(self) -> float:
        return INV_FLOOR_REL * float(self._vals[-1])

    def is_definite(self) -> bool:
        return bool(self._vals[0] > self.inv_floor)

    def _check_definite(self):
        if not self.is_definite():
            raise SingularMatrix(
                f"smallest eigenvalue {self._vals[0]:.3e} <= floor {self.inv_floor:.3e}; "
                "regularize the matrix (e.g. add a multiple of the identity)"
            )


def as_psd(m) -> PsdMatrix:
    return m if isinstance(m, PsdMatrix) else PsdMatrix(m)


def psd_sqrt(q) -> SymMatrix:
    """Unique PSD square root."""
    q = as_psd(q)
    v = q.eigenvectors
    return SymMatrix((v * np.sqrt(q.eigenvalues)) @ v.T)


def psd_inverse(q) -> PsdMatrix:
    """Inverse of a strictly positive definite matrix; no silent ridge."""
    q = as_psd(q)
    q._check_definite()
    v = q.eigenvectors
    return PsdMatrix((v / q.eigenvalues) @ v.T)


def psd_inv_sqrt(q) -> SymMatrix:
    q = as_psd(q)
    q._check_definite()
    v = q.eigenvectors
    return SymMatrix((v / np.sqrt(q.eigenvalues)) @ v.T)


def logdet(q) -> float:
    q = as_psd(q)
    q._check_definite()
    return float(np.sum(np.log(q.eigenvalues)))


@dataclass(frozen=True)
class OrderVerdict:
    holds: bool
    slack: float


def loewner_leq(a, b, tol: float = PSD_TOL) -> OrderVerdict:
    """Check ``a <= b`` in Loewner order; ``slack`` is the smallest eigenvalue of ``b - a``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if b.ndim == 0:
        b = b.reshape(1, 1)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"cannot compare shapes {a.shape} and {b.shape}")
    d = b - a
    slack = float(np.linalg.eigvalsh(0.5 * (d + d.T))[0])
    return OrderVerdict(holds=slack >= -tol, slack=slack)


def weighted_sq_norm(v, w) -> float:
    """``<v, W v>``."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    w = np.asarray(w, dtype=np.float64)
    if w.ndim == 0:
        w = w.reshape(1, 1)
    if w.shape != (v.size, v.size):
        raise DimensionMismatch(f"vector of length {v.size} vs matrix {w.shape}")
    return float(v @ w @ v)
