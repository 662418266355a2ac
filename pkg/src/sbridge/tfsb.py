"""Training-free drift estimator built directly from endpoint pairs.

For pairs ``(x0_i, x1_i)`` drawn from the static coupling, the drift at
``(x, t)`` is a weighted average of the per-pair terms
``sigma(t)^2 * grad_x log q(t, x, 1, x1_i)`` with weights

    w_i  prop.to  q(0, x0_i, t, x) q(t, x, 1, x1_i) / q(0, x0_i, 1, x1_i).

The weight is exactly the pinned-bridge density of ``x_t = x`` given the
pair, so its log is a quadratic in ``x`` around the bridge mean ``m_i(t)``.
Batched evaluation uses that form: the logits for a block of particles are
one matrix product against the stacked bridge means.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import logsumexp

from .errors import DimensionError, NumericalError, SingularHorizonError, ValidationError
from .fields import DriftField, worker_count
from .reference import ReferenceProcess, conditional_score, log_transition_density
from .static_ot import Coupling

__all__ = ["EmpiricalDrift", "build_tfsb", "evaluate_drift", "sfp_drift"]

# exp() of anything below this is zero in double precision
_LOG_UNDERFLOW = -745.0
# particles per block; small blocks keep the (block, n) logit matrix in cache
_BLOCK = 16
# above this dimension a k-d tree is no faster than a full pass
_TREE_MAX_DIM = 8


def _as_pairs(pairs):
    if isinstance(pairs, Coupling):
        return pairs.pairs
    if isinstance(pairs, tuple) and len(pairs) == 2 and np.ndim(pairs[0]) == 2:
        return np.asarray(pairs[0], dtype=float), np.asarray(pairs[1], dtype=float)
    pairs = list(pairs)
    if not pairs:
        raise ValidationError("need at least one endpoint pair")
    dims = {(np.size(a), np.size(b)) for a, b in pairs}
    if len(dims) != 1 or len({*next(iter(dims))}) != 1:
        raise DimensionError(f"pairs do not share one dimension: {sorted(dims)}")
    x0 = np.array([np.ravel(a) for a, _ in pairs], dtype=float)
    x1 = np.array([np.ravel(b) for _, b in pairs], dtype=float)
    return x0, x1


class EmpiricalDrift(DriftField):
    """Closed-form drift over a fixed set of endpoint pairs.

    ``top_k`` keeps only the largest weights per query; leave it ``None`` for
    the exact estimator.
    """

    kind = "tfsb"

    def __init__(self, x0, x1, ref: ReferenceProcess, top_k=None):
        x0 = np.atleast_2d(np.asarray(x0, dtype=float))
        x1 = np.atleast_2d(np.asarray(x1, dtype=float))
        if x0.shape[0] < 1:
            raise ValidationError("need at least one endpoint pair")
        if x0.shape != x1.shape:
            raise DimensionError(f"pair arrays differ in shape: {x0.shape} vs {x1.shape}")
        if top_k is not None and top_k < 1:
            raise ValidationError("top_k must be a positive integer or None")
        self.x0 = x0
        self.x1 = x1
        self.ref = ref
        self.top_k = top_k
        self.dim = x0.shape[1]
        self.n = x0.shape[0]
        self.log_denominator = -log_transition_density(ref, 0.0, x0, 1.0, x1)
        if not np.all(np.isfinite(self.log_denominator)):
            raise NumericalError("reference density of a pair is not finite; kappa(1, 1) must be positive")
        self._x1_aug = np.hstack([x1, np.ones((self.n, 1))])

    def __repr__(self):
        return f"EmpiricalDrift(n={self.n}, d={self.dim}, ref={self.ref!r})"

    def _check_time(self, t):
        if t >= 1.0 - self.ref.horizon_eps:
            raise SingularHorizonError(
                f"drift is singular at t={t}; horizon guard is 1 - {self.ref.horizon_eps}")

    def bridge_means(self, t):
        w0, w1, offset, var = self.ref.bridge_coefficients(t)
        return w0 * self.x0 + w1 * self.x1 + offset, var

    def log_weights(self, x, t):
        """Unnormalised log weights of every pair for one query point."""
        self._check_time(t)
        x = np.asarray(x, dtype=float)
        means, var = self.bridge_means(t)
        resid = x - means
        return -0.5 * np.einsum("ij,ij->i", resid, resid) / var - 0.5 * self.dim * np.log(2 * np.pi * var)

    def weights(self, x, t):
        lw = self.log_weights(x, t)
        self._underflow_guard(lw.max(), x, t)
        if self.top_k is not None and self.top_k < self.n:
            cut = np.partition(lw, -self.top_k)[-self.top_k]
            lw = np.where(lw >= cut, lw, -np.inf)
        return np.exp(lw - logsumexp(lw))

    def _underflow_guard(self, max_log_w, x, t):
        if max_log_w < _LOG_UNDERFLOW:
            means, _ = self.bridge_means(t)
            nearest = float(np.sqrt(np.min(np.sum((np.asarray(x) - means) ** 2, axis=-1))))
            raise NumericalError(
                f"all pair weights underflow at t={t:.4g}: query lies {nearest:.4g} from the nearest "
                f"bridge mean, too far from the data")

    def _row_max_logit(self, x, means, var, half_sq):
        """Largest ``x.m/v - |m|^2/2v`` over the pairs, for every query row."""
        if self.dim <= _TREE_MAX_DIM and x.shape[0] >= _BLOCK:
            # the maximiser is the nearest bridge mean
            dist, _ = cKDTree(means).query(x)
            return 0.5 * (np.einsum("ij,ij->i", x, x) - dist ** 2) / var
        means_t = means.T / var
        return np.concatenate([(x[lo:lo + _BLOCK] @ means_t - half_sq).max(axis=1)
                               for lo in range(0, x.shape[0], _BLOCK)])

    def _evaluate(self, x, t):
        self._check_time(t)
        means, var = self.bridge_means(t)
        half_sq = 0.5 * np.einsum("ij,ij->i", means, means) / var
        top = self._row_max_logit(x, means, var, half_sq)
        log_norm = -0.5 * self.dim * np.log(2 * np.pi * var)
        # restore the dropped -|x|^2 / 2v term to test for underflow
        max_log_w = top - 0.5 * np.einsum("ij,ij->i", x, x) / var + log_norm
        bad = np.flatnonzero(max_log_w < _LOG_UNDERFLOW)
        if bad.size:
            self._underflow_guard(max_log_w[bad[0]], x[bad[0]], t)
        # augmented rows so that one product gives logits already shifted by the row max
        coef = np.vstack([means.T / var, -half_sq, np.ones(self.n)])
        x_aug = np.column_stack([x, np.ones(x.shape[0]), -top])
        tau1 = float(self.ref.tau1(t))
        scale = float(self.ref.sigma(t)) ** 2 * tau1 / float(self.ref.kappa1(t))
        zeta1 = self.ref.zeta1(t)
        k = x.shape[0]
        out = np.empty_like(x)

        def block(lo):
            logits = x_aug[lo:lo + _BLOCK] @ coef
            if self.top_k is not None and self.top_k < self.n:
                cut = np.partition(logits, -self.top_k, axis=1)[:, -self.top_k]
                logits[logits < cut[:, None]] = -np.inf
            np.exp(logits, out=logits)
            acc = logits @ self._x1_aug
            mean_x1 = acc[:, :-1] / acc[:, -1:]
            out[lo:lo + _BLOCK] = scale * (mean_x1 - tau1 * x[lo:lo + _BLOCK] - zeta1)

        starts = range(0, k, _BLOCK)
        workers = min(worker_count(), max(1, k // (4 * _BLOCK)))
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                list(pool.map(block, starts))
        else:
            for lo in starts:
                block(lo)
        return out


def build_tfsb(pairs, ref: ReferenceProcess, top_k=None) -> EmpiricalDrift:
    """Drift field over paired endpoints.

    ``pairs`` may be a paired :class:`Coupling`, a tuple of two ``(n, d)``
    arrays, or a sequence of ``(x0, x1)`` tuples.
    """
    x0, x1 = _as_pairs(pairs)
    return EmpiricalDrift(x0, x1, ref, top_k=top_k)


def evaluate_drift(f: EmpiricalDrift, x, t):
    return f(x, t)


def sfp_drift(mu1_samples, a, ref: ReferenceProcess, x, t):
    """Drift when the initial law is a point mass at ``a``.

    Weights are ``q(t, x, 1, x1_i) / q(0, a, 1, x1_i)``; the common factor
    ``q(0, a, t, x)`` has been dropped.  ``x`` may be one point or a batch.
    """
    x1 = np.atleast_2d(np.asarray(mu1_samples, dtype=float))
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    if x1.shape[0] < 1:
        raise ValidationError("need at least one terminal sample")
    if a.shape != (x1.shape[1],) or x.shape[-1] != x1.shape[1]:
        raise DimensionError(f"dimensions disagree: samples {x1.shape}, a {a.shape}, x {x.shape}")
    t = float(t)
    if not 0.0 < t < 1.0:
        raise ValidationError(f"drift time must lie in (0, 1), got {t}")
    sigma2 = float(ref.sigma(t)) ** 2
    log_den = log_transition_density(ref, 0.0, a, 1.0, x1)

    def one(xq):
        lw = log_transition_density(ref, t, xq, 1.0, x1) - log_den
        top = lw.max()
        if top < _LOG_UNDERFLOW:
            nearest = float(np.sqrt(np.min(np.sum((x1 - xq) ** 2, axis=1))))
            raise NumericalError(
                f"all weights underflow at t={t:.4g}; nearest terminal sample is {nearest:.4g} away")
        w = np.exp(lw - logsumexp(lw))
        return sigma2 * (w @ conditional_score(ref, xq, t, x1))

    if x.ndim == 1:
        return one(x)
    return np.array([one(xq) for xq in x])
