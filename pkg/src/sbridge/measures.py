"""Gaussian measures and symmetric matrix functions."""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, ValidationError

EIG_FLOOR = 1e-12


def sym_eig(a, floor=EIG_FLOOR):
    a = np.asarray(a, dtype=float)
    vals, vecs = np.linalg.eigh(0.5 * (a + a.T))
    return np.maximum(vals, floor), vecs


def sym_func(a, fn, floor=EIG_FLOOR):
    """Apply a scalar function to a symmetric matrix through its spectrum."""
    vals, vecs = sym_eig(a, floor)
    return (vecs * fn(vals)) @ vecs.T


def sqrtm_spd(a):
    return sym_func(a, np.sqrt)


def inv_sqrtm_spd(a):
    return sym_func(a, lambda v: 1.0 / np.sqrt(v))


def entropic_cross_covariance(cov0, cov1, sigma2):
    """Cross-covariance of the entropic OT coupling between two Gaussians.

    For cost ``|x1 - x0|^2`` with entropy weight ``2 * sigma2``:
    ``D = (4 S0^1/2 S1 S0^1/2 + sigma2^2 I)^1/2`` and
    ``C = (S0^1/2 D S0^-1/2 - sigma2 I) / 2``.
    """
    d = cov0.shape[0]
    r0 = sqrtm_spd(cov0)
    r0_inv = inv_sqrtm_spd(cov0)
    dmat = sqrtm_spd(4.0 * r0 @ cov1 @ r0 + sigma2**2 * np.eye(d))
    return dmat, 0.5 * (r0 @ dmat @ r0_inv - sigma2 * np.eye(d))


class GaussianMeasure:
    """Multivariate normal with an eigendecomposition cache.

    Covariances are symmetrised on input; eigenvalues are floored at
    ``EIG_FLOOR`` so nearly singular empirical covariances stay usable.
    """

    def __init__(self, mean, cov):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        d = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (d, d):
            raise DimensionError(f"mean of shape {mean.shape} and cov of shape {cov.shape} disagree")
        if not np.all(np.isfinite(cov)) or not np.all(np.isfinite(mean)):
            raise ValidationError("mean and covariance must be finite")
        if np.max(np.abs(cov - cov.T)) > 1e-12 * max(1.0, np.max(np.abs(cov))):
            raise ValidationError("covariance is not symmetric")
        raw = np.linalg.eigvalsh(cov)
        if raw[0] <= 0:
            raise ValidationError(f"covariance is not positive definite (smallest eigenvalue {raw[0]:.3e})")
        self.mean = mean
        self.cov = 0.5 * (cov + cov.T)
        self.eigvals, self.eigvecs = sym_eig(self.cov)

    @property
    def dim(self):
        return self.mean.shape[0]

    def sqrt_cov(self):
        return (self.eigvecs * np.sqrt(self.eigvals)) @ self.eigvecs.T

    def sample(self, n, rng):
        z = rng.standard_normal((n, self.dim))
        return self.mean + (z * np.sqrt(self.eigvals)) @ self.eigvecs.T

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        z = (x - self.mean) @ self.eigvecs / np.sqrt(self.eigvals)
        return -0.5 * np.sum(z**2, axis=-1) - 0.5 * np.sum(np.log(2 * np.pi * self.eigvals))

    def __repr__(self):
        return f"GaussianMeasure(mean={self.mean.tolist()}, cov={self.cov.tolist()})"

    @classmethod
    def from_flat(cls, mean, cov_row_major):
        """Parse a mean list and a row-major covariance list (CLI / config form)."""
        mean = np.asarray(mean, dtype=float)
        cov = np.asarray(cov_row_major, dtype=float)
        d = mean.size
        if cov.size != d * d:
            raise DimensionError(f"covariance needs {d * d} entries for dimension {d}, got {cov.size}")
        return cls(mean, cov.reshape(d, d))
