"""Affine reference SDEs and their Gaussian transition kernels.

The reference process is

    dx_t = (c(t) x_t + alpha(t)) dt + sigma(t) dw_t,

with scalar ``c`` and ``sigma`` and vector offset ``alpha``.  Everything the
rest of the package needs reduces to three antiderivatives

    log_tau(t) = int_0^t c,   Z(t) = int_0^t alpha / tau,   K(t) = int_0^t sigma^2 / tau^2,

from which ``tau = exp(log_tau)``, ``zeta = tau * Z`` and ``kappa = tau^2 * K``.
The VE, VP and sub-VP presets have these in closed form; custom schedules are
integrated with composite Gauss-Legendre quadrature on a cached panel table.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionError, SingularHorizonError, ValidationError

__all__ = [
    "ReferenceProcess",
    "KernelMoments",
    "build_reference",
    "custom_reference",
    "kernel_moments",
    "conditional_score",
    "bridge_moments",
    "log_transition_density",
    "KINDS",
]

KINDS = ("VE", "VP", "SubVP", "CustomAffine")

_GL_ORDER = 8
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(_GL_ORDER)


def _as_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ValidationError(f"time must lie in [0, 1], got {t}")
    return t


class _ClosedForm:
    """Antiderivatives for the named presets (exact, no quadrature)."""

    def __init__(self, kind, sigma_const, beta_min, beta_max):
        self.kind = kind
        self.sigma_const = sigma_const
        self.b0 = beta_min
        self.b1 = beta_max

    def beta(self, t):
        return self.b0 + t * (self.b1 - self.b0)

    def big_b(self, t):
        return self.b0 * t + 0.5 * (self.b1 - self.b0) * t * t

    def c(self, t):
        if self.kind == "VE":
            return np.zeros_like(t)
        return -0.5 * self.beta(t)

    def sigma(self, t):
        if self.kind == "VE":
            return np.full_like(t, self.sigma_const)
        if self.kind == "VP":
            return np.sqrt(self.beta(t))
        return np.sqrt(self.beta(t) * -np.expm1(-2.0 * self.big_b(t)))

    def log_tau(self, t):
        if self.kind == "VE":
            return np.zeros_like(t)
        return -0.5 * self.big_b(t)

    def big_z(self, t):
        return np.zeros_like(t)

    def big_k(self, t):
        if self.kind == "VE":
            return self.sigma_const**2 * t
        b = self.big_b(t)
        if self.kind == "VP":
            # beta * e^B integrates to e^B - 1
            return np.expm1(b)
        # beta * (e^B - e^-B) integrates to e^B + e^-B - 2 = 4 sinh^2(B/2)
        return 4.0 * np.sinh(0.5 * b) ** 2


class _Quadrature:
    """Antiderivatives of user schedules from a cached Gauss-Legendre panel table.

    Full panels are summed once at construction; a query adds one partial panel
    integrated with the same rule, so lookups cost O(1) schedule evaluations.
    """

    def __init__(self, c, alpha, sigma, quad_nodes):
        self._c = c
        self._alpha = alpha
        self._sigma = sigma
        self.panels = max(quad_nodes // _GL_ORDER, 2)
        self.edges = np.linspace(0.0, 1.0, self.panels + 1)
        lo, hi = self.edges[:-1], self.edges[1:]
        self._lt_table = np.concatenate([[0.0], np.cumsum(self._panel(self._c, lo, hi))])
        self._k_table = np.concatenate([[0.0], np.cumsum(self._panel(self._k_integrand, lo, hi))])
        if alpha is None:
            self._z_table = None
        else:
            z = self._panel(self._z_integrand, lo, hi)
            self._z_table = np.concatenate([np.zeros((1,) + z.shape[1:]), np.cumsum(z, axis=0)])

    @staticmethod
    def _panel(f, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        half = 0.5 * (b - a)
        nodes = a[..., None] + half[..., None] * (_GL_NODES + 1.0)
        vals = np.asarray(f(nodes), dtype=float)
        if vals.ndim == nodes.ndim:
            return half * np.sum(vals * _GL_WEIGHTS, axis=-1)
        # vector integrand: (..., order, d)
        return half[..., None] * np.einsum("...kd,k->...d", vals, _GL_WEIGHTS)

    def _locate(self, t):
        k = np.clip(np.floor(t * self.panels).astype(int), 0, self.panels - 1)
        return k, self.edges[k]

    def log_tau(self, t):
        k, a = self._locate(t)
        return self._lt_table[k] + self._panel(self._c, a, t)

    def _k_integrand(self, s):
        return np.asarray(self._sigma(s), dtype=float) ** 2 * np.exp(-2.0 * self.log_tau(s))

    def _z_integrand(self, s):
        a = np.asarray(self._alpha(s), dtype=float)
        inv_tau = np.exp(-self.log_tau(s))
        if a.ndim == s.ndim:
            return a * inv_tau
        return a * inv_tau[..., None]

    def big_k(self, t):
        k, a = self._locate(t)
        return self._k_table[k] + self._panel(self._k_integrand, a, t)

    def big_z(self, t):
        if self._z_table is None:
            return np.zeros_like(t)
        k, a = self._locate(t)
        return self._z_table[k] + self._panel(self._z_integrand, a, t)

    def c(self, t):
        return np.asarray(self._c(t), dtype=float) * np.ones_like(t)

    def sigma(self, t):
        return np.asarray(self._sigma(t), dtype=float) * np.ones_like(t)


class ReferenceProcess:
    """Affine reference SDE with cached integral functions.

    Instances are immutable; build them with :func:`build_reference` or
    :func:`custom_reference`.  Methods accept scalar or array times and return
    matching shapes.  Vector-valued quantities (``zeta``, ``alpha``) are the
    float ``0.0`` when the process has no offset term, which broadcasts
    against any state array.
    """

    __slots__ = ("kind", "quad_nodes", "horizon_eps", "beta_min", "beta_max", "sigma_const", "_impl", "_alpha", "_tau1", "_z1", "_k1")

    def __init__(self, kind, impl, *, alpha=None, quad_nodes=256, horizon_eps=1e-3,
                 beta_min=None, beta_max=None, sigma_const=None):
        set_ = object.__setattr__
        set_(self, "kind", kind)
        set_(self, "quad_nodes", quad_nodes)
        set_(self, "horizon_eps", horizon_eps)
        set_(self, "beta_min", beta_min)
        set_(self, "beta_max", beta_max)
        set_(self, "sigma_const", sigma_const)
        set_(self, "_impl", impl)
        set_(self, "_alpha", alpha)
        one = np.asarray(1.0)
        set_(self, "_tau1", float(np.exp(impl.log_tau(one))))
        set_(self, "_k1", float(impl.big_k(one)))
        z1 = np.asarray(impl.big_z(one), dtype=float)
        set_(self, "_z1", float(z1) if z1.ndim == 0 else z1)

    def __setattr__(self, name, value):
        raise AttributeError("ReferenceProcess is immutable")

    def __repr__(self):
        if self.kind == "VE":
            extra = f"sigma={self.sigma_const}"
        elif self.kind in ("VP", "SubVP"):
            extra = f"beta_min={self.beta_min}, beta_max={self.beta_max}"
        else:
            extra = f"quad_nodes={self.quad_nodes}"
        return f"ReferenceProcess({self.kind}, {extra})"

    @property
    def has_offset(self):
        return self._alpha is not None

    # schedules ---------------------------------------------------------
    def c(self, t):
        return self._impl.c(_as_time(t))

    def sigma(self, t):
        return self._impl.sigma(_as_time(t))

    def alpha(self, t):
        if self._alpha is None:
            return 0.0
        t = _as_time(t)
        return np.asarray(self._alpha(t), dtype=float)

    def drift(self, x, t):
        """Reference drift ``c(t) x + alpha(t)`` at a scalar time."""
        return float(self.c(t)) * np.asarray(x) + self.alpha(t)

    # integral functions -------------------------------------------------
    def log_tau(self, t):
        return self._impl.log_tau(_as_time(t))

    def tau(self, t):
        return np.exp(self.log_tau(t))

    def tau1(self, t):
        """``exp(int_t^1 c)``, the scale of the kernel from ``t`` to 1."""
        return self._tau1 / self.tau(t)

    def _z(self, t):
        z = self._impl.big_z(_as_time(t))
        return 0.0 if self._alpha is None else z

    def zeta(self, t):
        if self._alpha is None:
            return 0.0
        t = _as_time(t)
        return _scale_vec(self.tau(t), self._z(t))

    def zeta1(self, t):
        if self._alpha is None:
            return 0.0
        return self._tau1 * (self._z1 - self._z(t))

    def big_k(self, t):
        return self._impl.big_k(_as_time(t))

    def kappa(self, t):
        """Variance of ``x_t`` given ``x_0``: ``tau(t)^2 K(t)``."""
        return self.tau(t) ** 2 * self.big_k(t)

    def kappa1(self, t):
        """Variance of ``x_1`` given ``x_t``: ``tau(1)^2 (K(1) - K(t))``."""
        return self._tau1**2 * (self._k1 - self.big_k(t))

    @property
    def tau_one(self):
        return self._tau1

    @property
    def kappa_one(self):
        return self._tau1**2 * self._k1

    @property
    def zeta_one(self):
        return 0.0 if self._alpha is None else self._tau1 * self._z1

    def bridge_coefficients(self, t):
        """Coefficients of the pinned-bridge law ``x_t | x_0, x_1``.

        Returns ``(w0, w1, offset, variance)`` with mean
        ``w0 * x0 + w1 * x1 + offset``.
        """
        t = float(t)
        if not 0.0 < t < 1.0:
            raise ValidationError(f"bridge time must lie in (0, 1), got {t}")
        k_t = float(self.kappa(t))
        k1_t = float(self.kappa1(t))
        k11 = self.kappa_one
        tau_t = float(self.tau(t))
        w0 = tau_t * k1_t / k11
        w1 = self._tau1 * k_t / (tau_t * k11)
        offset = self.zeta(t) - w1 * self.zeta_one if self._alpha is not None else 0.0
        return w0, w1, offset, k_t * k1_t / k11

    def time_rescaled(self, gap):
        """Reference for a window of length ``gap`` mapped onto unit time.

        Drift coefficients scale by ``gap`` and the diffusion by ``sqrt(gap)``.
        """
        if gap <= 0:
            raise ValidationError("gap must be positive")
        if self.kind == "VE":
            return build_reference("VE", sigma=self.sigma_const * np.sqrt(gap),
                                   quad_nodes=self.quad_nodes, horizon_eps=self.horizon_eps)
        alpha = None if self._alpha is None else (lambda s: gap * self._alpha(s))
        return custom_reference(lambda s: gap * self._impl.c(s), alpha,
                                lambda s: np.sqrt(gap) * self._impl.sigma(s),
                                quad_nodes=self.quad_nodes, horizon_eps=self.horizon_eps)


def _scale_vec(scale, vec):
    scale = np.asarray(scale)
    vec = np.asarray(vec)
    if vec.ndim > scale.ndim:
        return scale[..., None] * vec
    return scale * vec


def build_reference(kind="VE", *, beta_min=0.1, beta_max=20.0, sigma=1.0,
                    quad_nodes=256, horizon_eps=1e-3):
    """Named reference preset.

    ``VE`` uses a constant diffusion ``sigma``; ``VP`` and ``SubVP`` use the
    linear schedule ``beta(t) = beta_min + t (beta_max - beta_min)``.  Pass
    ``beta_min == beta_max`` for a constant rate (``beta = 1`` gives the
    Ornstein-Uhlenbeck reference).
    """
    if kind not in ("VE", "VP", "SubVP"):
        raise ValidationError(f"unknown preset {kind!r}; expected one of VE, VP, SubVP")
    if quad_nodes < 16:
        raise ValidationError("quad_nodes must be at least 16")
    if not 0.0 < horizon_eps < 0.5:
        raise ValidationError("horizon_eps must lie in (0, 0.5)")
    if kind == "VE":
        if not sigma > 0:
            raise ValidationError(f"sigma must be positive, got {sigma}")
        impl = _ClosedForm("VE", float(sigma), None, None)
        return ReferenceProcess("VE", impl, quad_nodes=quad_nodes, horizon_eps=horizon_eps,
                                sigma_const=float(sigma))
    if not (beta_min > 0 and beta_max > 0):
        raise ValidationError("beta_min and beta_max must be positive")
    if beta_min > beta_max:
        raise ValidationError(f"beta_min={beta_min} exceeds beta_max={beta_max}")
    impl = _ClosedForm(kind, None, float(beta_min), float(beta_max))
    return ReferenceProcess(kind, impl, quad_nodes=quad_nodes, horizon_eps=horizon_eps,
                            beta_min=float(beta_min), beta_max=float(beta_max))


def custom_reference(c: Callable, alpha, sigma: Callable, *, quad_nodes=256, horizon_eps=1e-3):
    """Reference with user-supplied schedules.

    ``c`` and ``sigma`` map an array of times to an array of the same shape.
    ``alpha`` is ``None``, a constant vector, or a callable mapping times of
    shape ``(...)`` to ``(..., d)``.
    """
    if quad_nodes < 16:
        raise ValidationError("quad_nodes must be at least 16")
    if alpha is not None and not callable(alpha):
        const = np.atleast_1d(np.asarray(alpha, dtype=float))

        def alpha(s, _v=const):
            s = np.asarray(s, dtype=float)
            return np.broadcast_to(_v, s.shape + _v.shape).copy()

    probe = np.linspace(0.0, 1.0, 4 * quad_nodes + 1)[1:-1]
    sig = np.asarray(sigma(probe), dtype=float) * np.ones_like(probe)
    if not np.all(np.isfinite(sig)) or np.any(sig <= 0):
        raise ValidationError("sigma(t) must be positive on (0, 1)")
    impl = _Quadrature(c, alpha, sigma, quad_nodes)
    return ReferenceProcess("CustomAffine", impl, alpha=alpha, quad_nodes=quad_nodes,
                            horizon_eps=horizon_eps)


@dataclass(frozen=True)
class KernelMoments:
    """Gaussian transition ``x_t | x_s ~ N(scale * x_s + shift, variance * I)``."""

    scale: float
    shift: np.ndarray | float
    variance: float


def kernel_moments(ref: ReferenceProcess, s, t) -> KernelMoments:
    s = float(s)
    t = float(t)
    if s > t:
        raise ValidationError(f"kernel needs s <= t, got s={s}, t={t}")
    _as_time(s), _as_time(t)
    tau_s, tau_t = float(ref.tau(s)), float(ref.tau(t))
    variance = tau_t**2 * (float(ref.big_k(t)) - float(ref.big_k(s)))
    if ref.has_offset:
        shift = tau_t * (ref._z(t) - ref._z(s))
    else:
        shift = 0.0
    return KernelMoments(tau_t / tau_s, shift, max(variance, 0.0))


def log_transition_density(ref: ReferenceProcess, s, x, t, y):
    """``log q(s, x, t, y)`` for state arrays whose last axis is the dimension."""
    km = kernel_moments(ref, s, t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = y.shape[-1]
    resid = y - (km.scale * x + km.shift)
    return -0.5 * np.sum(resid**2, axis=-1) / km.variance - 0.5 * d * np.log(2 * np.pi * km.variance)


def conditional_score(ref: ReferenceProcess, x, t, x1):
    """Gradient in ``x`` of ``log q(t, x, 1, x1)``.

    Raises :class:`SingularHorizonError` once ``t >= 1 - ref.horizon_eps``.
    """
    t = float(t)
    if t >= 1.0 - ref.horizon_eps:
        raise SingularHorizonError(
            f"conditional score is singular at t={t}; horizon guard is 1 - {ref.horizon_eps}")
    x = np.asarray(x, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    if x.shape[-1:] != x1.shape[-1:]:
        raise DimensionError(f"state dimension mismatch: {x.shape} vs {x1.shape}")
    tau1 = float(ref.tau1(t))
    return tau1 * (x1 - tau1 * x - ref.zeta1(t)) / float(ref.kappa1(t))


def bridge_moments(ref: ReferenceProcess, x0, x1, t):
    """Mean and isotropic variance of ``x_t`` given both endpoints."""
    w0, w1, offset, var = ref.bridge_coefficients(t)
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    if x0.shape[-1:] != x1.shape[-1:]:
        raise DimensionError(f"endpoint dimension mismatch: {x0.shape} vs {x1.shape}")
    return w0 * x0 + w1 * x1 + offset, var
