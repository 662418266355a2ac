"""Exact bridge drift between two Gaussian marginals.

With ``x0 ~ N(nu0, S0)``, ``x1 ~ N(nu1, S1)`` and the static coupling's
cross-covariance ``C``, the drift is affine in ``x`` at every ``t``:

    u(x, t) = sigma(t)^2 [M(t) V(t)^-1 (x - m(t)) + k(t)]

where ``m(t)``, ``V(t)`` are the mean and covariance of ``x_t`` along the
bridge and

    M = tau1/(tau kappa11) (r S1 + rbar C^T) - tau1^2/(tau kappa11) (rbar S0 + r C) - rho I
    k = tau1/(tau kappa11) (nu1 - zeta1) - tau1^2/(tau kappa11) nu0

with ``tau1 = tau(1)``, ``kappa11 = kappa(1, 1)``, ``zeta1 = zeta(1)`` and the
bridge coefficients

    r = tau1 kappa(t,t) / (tau(t) kappa11)
    rbar = tau(t) kappa1(t,t) / kappa11
    rho = tau1^2 kappa(t,t) / (tau(t)^2 kappa11).

``V(t) = lam(t) S(t)`` with ``lam = kappa(t,t) kappa1(t,t) / kappa11`` and
``S(t) = I + tau^2 kappa1/(kappa kappa11) S0 + tau1^2 kappa/(tau^2 kappa1 kappa11) S1
+ tau1/kappa11 (C + C^T)``.  The factor ``lam`` is required: without it the
field is not the conditional expectation of the per-pair drift.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, NumericalError, ValidationError
from .fields import DriftField
from .measures import GaussianMeasure, entropic_cross_covariance
from .reference import ReferenceProcess

__all__ = ["GaussianBridgeDrift", "build_gaussian_drift", "gaussian_drift"]

_MAX_COND = 1e12


class GaussianBridgeDrift(DriftField):
    kind = "gauss"

    def __init__(self, mu0: GaussianMeasure, mu1: GaussianMeasure, ref: ReferenceProcess):
        if mu0.dim != mu1.dim:
            raise DimensionError(f"dimension mismatch: {mu0.dim} vs {mu1.dim}")
        if not ref.kappa_one > 0:
            raise ValidationError("kappa(1, 1) must be positive")
        self.mu0 = mu0
        self.mu1 = mu1
        self.ref = ref
        self.dim = mu0.dim
        self.sigma_star2 = ref.kappa_one / ref.tau_one
        self.dmat, self.cross = entropic_cross_covariance(mu0.cov, mu1.cov, self.sigma_star2)
        if np.linalg.eigvalsh(self.dmat)[0] <= 0:
            raise NumericalError("D matrix is not positive definite")

    def __repr__(self):
        return f"GaussianBridgeDrift(mu0={self.mu0!r}, mu1={self.mu1!r}, ref={self.ref!r})"

    def _scalars(self, t):
        ref = self.ref
        tau_t = float(ref.tau(t))
        k_t = float(ref.kappa(t))
        k1_t = float(ref.kappa1(t))
        tau1, k11 = ref.tau_one, ref.kappa_one
        r = tau1 * k_t / (tau_t * k11)
        rbar = tau_t * k1_t / k11
        rho = tau1**2 * k_t / (tau_t**2 * k11)
        lam = k_t * k1_t / k11
        return tau_t, k_t, k1_t, r, rbar, rho, lam

    def _sigma_t(self, t):
        tau_t, k_t, k1_t, *_ = self._scalars(t)
        tau1, k11 = self.ref.tau_one, self.ref.kappa_one
        c = self.cross
        return (np.eye(self.dim)
                + tau_t**2 * k1_t / (k_t * k11) * self.mu0.cov
                + tau1**2 * k_t / (tau_t**2 * k1_t * k11) * self.mu1.cov
                + tau1 / k11 * (c + c.T))

    def marginal(self, t):
        """Law of ``x_t`` under the bridge."""
        t = float(t)
        if not 0.0 < t < 1.0:
            raise ValidationError(f"t must lie in (0, 1), got {t}")
        _, _, _, r, rbar, _, lam = self._scalars(t)
        mean = rbar * self.mu0.mean + r * self.mu1.mean + self.ref.zeta(t) - r * self.ref.zeta_one
        cov = lam * self._sigma_t(t)
        return GaussianMeasure(mean, 0.5 * (cov + cov.T))

    def affine(self, t):
        """``(A, b)`` with ``u(x, t) = A x + b``."""
        t = float(t)
        if not 0.0 < t < 1.0:
            raise ValidationError(f"t must lie in (0, 1), got {t}")
        tau_t, _, _, r, rbar, rho, lam = self._scalars(t)
        tau1, k11 = self.ref.tau_one, self.ref.kappa_one
        s0, s1, c = self.mu0.cov, self.mu1.cov, self.cross
        a1 = tau1 / (tau_t * k11)
        a0 = tau1**2 / (tau_t * k11)
        m = a1 * (r * s1 + rbar * c.T) - a0 * (rbar * s0 + r * c) - rho * np.eye(self.dim)
        v = lam * self._sigma_t(t)
        cond = np.linalg.cond(v)
        if not np.isfinite(cond) or cond > _MAX_COND:
            raise NumericalError(f"bridge covariance at t={t:.4g} is singular (condition number {cond:.3e})")
        mean = rbar * self.mu0.mean + r * self.mu1.mean + self.ref.zeta(t) - r * self.ref.zeta_one
        sigma2 = float(self.ref.sigma(t)) ** 2
        gain = sigma2 * np.linalg.solve(v.T, m.T).T
        const = sigma2 * (a1 * (self.mu1.mean - self.ref.zeta_one) - a0 * self.mu0.mean)
        return gain, const - gain @ mean

    def _evaluate(self, x, t):
        gain, offset = self.affine(t)
        return x @ gain.T + offset


def build_gaussian_drift(mu0: GaussianMeasure, mu1: GaussianMeasure, ref: ReferenceProcess):
    return GaussianBridgeDrift(mu0, mu1, ref)


def gaussian_drift(g: GaussianBridgeDrift, x, t):
    return g(x, t)
