"""Static bridge: entropic OT between empirical marginals.

Under an affine reference the static problem is entropic OT with cost
``|x1 - (tau(1) x0 + zeta(1))|^2`` and regularisation ``eps = 2 kappa(1, 1)``.
The solver keeps dual potentials in log form.  Each outer sweep is an exact
softmin update; between sweeps a few matrix-scaling iterations run on the
kernel with the current potentials absorbed, which is stable for any ``eps``
because the absorbed kernel has entries of order one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .errors import ConvergenceError, DimensionError, NumericalError, ValidationError
from .measures import GaussianMeasure, entropic_cross_covariance
from .reference import ReferenceProcess

__all__ = [
    "Coupling",
    "transport_cost",
    "sinkhorn_eot",
    "sample_pairs",
    "exact_gaussian_coupling",
    "independent_pairs",
    "row_stratified_pairs",
]

# below this eps / max-cost ratio the kernel carries no usable precision
_EPS_FLOOR = 1e-10
_ABSORB_AT = 30.0
_CHUNK_ELEMS = 4_000_000


@dataclass(frozen=True, eq=False)
class Coupling:
    """Joint law of endpoints.

    With ``plan`` set, ``x0`` (m, d) and ``x1`` (n, d) are the supports and
    ``plan[i, j]`` the mass on ``(x0[i], x1[j])``.  Without a plan the rows of
    ``x0`` and ``x1`` are already paired.
    """

    x0: np.ndarray
    x1: np.ndarray
    epsilon: float | None = None
    plan: np.ndarray | None = None
    log_u: np.ndarray | None = None
    log_v: np.ndarray | None = None
    residual: float | None = None
    iterations: int = 0
    objective_trace: tuple = field(default=(), repr=False)

    @classmethod
    def paired(cls, x0, x1):
        x0 = np.atleast_2d(np.asarray(x0, dtype=float))
        x1 = np.atleast_2d(np.asarray(x1, dtype=float))
        if x0.shape != x1.shape:
            raise DimensionError(f"paired arrays differ in shape: {x0.shape} vs {x1.shape}")
        return cls(x0, x1)

    @property
    def dim(self):
        return self.x0.shape[1]

    @property
    def pairs(self):
        """Row-aligned ``(x0, x1)`` arrays; only defined for paired couplings."""
        if self.plan is not None:
            raise ValidationError("coupling holds a plan; draw pairs with sample_pairs()")
        return self.x0, self.x1

    def schrodinger_potentials(self, ref: ReferenceProcess):
        """Log potentials ``(log rho0_hat, log rho1)`` with
        ``plan = q(0, x0, 1, x1) * rho0_hat(x0) * rho1(x1)`` for the reference density ``q``.
        """
        if self.log_u is None:
            raise ValidationError("coupling has no Sinkhorn scalings")
        # q = (2 pi kappa11)^(-d/2) exp(-C / eps); the constant goes into rho0_hat
        const = 0.5 * self.dim * np.log(2 * np.pi * ref.kappa_one)
        return self.log_u + const, self.log_v.copy()


def transport_cost(x0, x1, ref: ReferenceProcess):
    """Squared residual of ``x1`` against the reference mean map of ``x0``."""
    mapped = ref.tau_one * x0 + ref.zeta_one
    return cdist(mapped, x1, "sqeuclidean")


def _row_lse(log_k, shift_cols, out=None):
    m, n = log_k.shape
    step = max(1, _CHUNK_ELEMS // max(n, 1))
    out = np.empty(m) if out is None else out
    for s in range(0, m, step):
        out[s:s + step] = logsumexp(log_k[s:s + step] + shift_cols, axis=1)
    return out


def _col_lse(log_k, shift_rows):
    m, n = log_k.shape
    step = max(1, _CHUNK_ELEMS // max(m, 1))
    out = np.empty(n)
    for s in range(0, n, step):
        out[s:s + step] = logsumexp(log_k[:, s:s + step] + shift_rows[:, None], axis=0)
    return out


def _dual_objective(eps, log_a, log_b, lu, lv, total_mass):
    a = np.exp(log_a)
    b = np.exp(log_b)
    return eps * (a @ lu + b @ lv - total_mass + 1.0)


def sinkhorn_eot(x0, x1, ref: ReferenceProcess, max_iters=10_000, tol=1e-6, *,
                 method="stabilized", trace_every=10):
    """Entropic OT plan between uniform empirical measures on ``x0`` and ``x1``.

    Returns a :class:`Coupling` whose row and column marginals match
    ``1/m`` and ``1/n`` to ``tol`` in L1.  ``method="log"`` runs plain softmin
    sweeps only; it is slower but useful as a cross-check.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    x1 = np.atleast_2d(np.asarray(x1, dtype=float))
    if x0.shape[0] < 1 or x1.shape[0] < 1:
        raise ValidationError("both marginals need at least one point")
    if x0.shape[1] != x1.shape[1]:
        raise DimensionError(f"dimension mismatch: {x0.shape[1]} vs {x1.shape[1]}")
    if not tol > 0:
        raise ValidationError("tol must be positive")
    if method not in ("stabilized", "log"):
        raise ValidationError(f"unknown method {method!r}")
    eps = 2.0 * ref.kappa_one
    if not eps > 0:
        raise ValidationError("kappa(1, 1) must be positive")
    cost = transport_cost(x0, x1, ref)
    if eps < _EPS_FLOOR * max(1.0, float(cost.max())):
        raise NumericalError(
            f"regularisation eps={eps:.3e} is below the representable floor for costs up to "
            f"{cost.max():.3e}; use a larger diffusion sigma")
    m, n = cost.shape
    log_k = np.multiply(cost, -1.0 / eps, out=cost)
    log_a = np.full(m, -np.log(m))
    log_b = np.full(n, -np.log(n))
    a = np.exp(log_a)
    b = np.exp(log_b)
    lu = np.zeros(m)
    lv = np.zeros(n)
    trace = []
    it = 0
    residual = np.inf
    row_buf = np.empty(m)

    while it < max_iters:
        lu = log_a - _row_lse(log_k, lv, row_buf)
        lv = log_b - _col_lse(log_k, lu)
        it += 1
        if method == "log":
            row_mass = np.exp(lu + _row_lse(log_k, lv, row_buf))
            residual = float(np.abs(row_mass - a).sum())
            if it % trace_every == 0:
                trace.append(_dual_objective(eps, log_a, log_b, lu, lv, row_mass.sum()))
            if residual <= tol:
                break
            continue
        kt = np.exp(log_k + lu[:, None] + lv[None, :])
        u = np.ones(m)
        v = np.ones(n)
        while True:
            kv = kt @ v
            row_mass = u * kv
            residual = float(np.abs(row_mass - a).sum())
            if it % trace_every == 0:
                trace.append(_dual_objective(eps, log_a, log_b, lu + np.log(u), lv + np.log(v),
                                             row_mass.sum()))
            if residual <= tol or it >= max_iters:
                break
            with np.errstate(divide="ignore", invalid="ignore"):
                u = a / kv
                v = b / (kt.T @ u)
            it += 1
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
                # fall back to an exact sweep from the last absorbed potentials
                u = np.ones(m)
                v = np.ones(n)
                break
            if np.max(np.abs(np.log(u))) > _ABSORB_AT or np.max(np.abs(np.log(v))) > _ABSORB_AT:
                break
        lu = lu + np.log(u)
        lv = lv + np.log(v)
        del kt
        if residual <= tol:
            break

    if residual > tol:
        raise ConvergenceError(
            f"Sinkhorn did not reach tol={tol:g} in {max_iters} iterations (residual {residual:.3e})",
            residual=residual, iterations=it)
    plan = np.exp(log_k + lu[:, None] + lv[None, :])
    return Coupling(x0, x1, epsilon=eps, plan=plan, log_u=lu, log_v=lv, residual=residual,
                    iterations=it, objective_trace=tuple(trace))


def sample_pairs(coupling: Coupling, k, seed):
    """Draw ``k`` i.i.d. endpoint pairs from a plan.

    Rows are drawn from the row marginal, then each column from the chosen
    row's conditional, which is the same law as a flat categorical over all
    ``m * n`` entries without materialising its cumulative table.
    """
    if coupling.plan is None:
        raise ValidationError("coupling has no plan to sample from")
    if k < 1:
        raise ValidationError("k must be at least 1")
    rng = np.random.default_rng(seed)
    plan = coupling.plan
    row_mass = plan.sum(axis=1)
    rows = rng.choice(plan.shape[0], size=k, p=row_mass / row_mass.sum())
    cols = np.empty(k, dtype=np.int64)
    order = np.argsort(rows, kind="stable")
    uniq, starts = np.unique(rows[order], return_index=True)
    bounds = np.append(starts, k)
    draws = rng.random(k)
    for r, lo, hi in zip(uniq, bounds[:-1], bounds[1:]):
        cdf = np.cumsum(plan[r])
        idx = order[lo:hi]
        cols[idx] = np.minimum(np.searchsorted(cdf, draws[idx] * cdf[-1], side="right"), plan.shape[1] - 1)
    return coupling.x0[rows], coupling.x1[cols]


def row_stratified_pairs(coupling: Coupling, per_row, seed):
    """``per_row`` partners for every source point, drawn from its row of the plan.

    The plan's row marginal is uniform, so the pairs are still a sample of the
    coupling; every source point is guaranteed to appear.
    """
    if coupling.plan is None:
        raise ValidationError("coupling has no plan to sample from")
    if per_row < 1:
        raise ValidationError("per_row must be at least 1")
    rng = np.random.default_rng(seed)
    plan = coupling.plan
    m, n = plan.shape
    cols = np.empty((m, per_row), dtype=np.int64)
    draws = rng.random((m, per_row))
    for i in range(m):
        cdf = np.cumsum(plan[i])
        cols[i] = np.minimum(np.searchsorted(cdf, draws[i] * cdf[-1], side="right"), n - 1)
    rows = np.repeat(np.arange(m), per_row)
    return coupling.x0[rows], coupling.x1[cols.ravel()]


def independent_pairs(x0, x1, k, seed):
    """Pairs from the product coupling (a baseline without any transport)."""
    rng = np.random.default_rng(seed)
    return x0[rng.integers(0, len(x0), k)], x1[rng.integers(0, len(x1), k)]


def exact_gaussian_coupling(mu0: GaussianMeasure, mu1: GaussianMeasure, ref: ReferenceProcess):
    """Static bridge between two Gaussians as a joint Gaussian on R^(2d).

    The cross-covariance is the entropic OT one at ``sigma*^2 = kappa(1,1) / tau(1)``.
    """
    if mu0.dim != mu1.dim:
        raise DimensionError(f"dimension mismatch: {mu0.dim} vs {mu1.dim}")
    sigma2 = ref.kappa_one / ref.tau_one
    _, cross = entropic_cross_covariance(mu0.cov, mu1.cov, sigma2)
    joint = np.block([[mu0.cov, cross], [cross.T, mu1.cov]])
    lo = np.linalg.eigvalsh(0.5 * (joint + joint.T))[0]
    if lo <= 0:
        raise NumericalError(f"assembled joint covariance is not SPD (smallest eigenvalue {lo:.3e})")
    return GaussianMeasure(np.concatenate([mu0.mean, mu1.mean]), 0.5 * (joint + joint.T))
