"""Euler-Maruyama sampling, empirical Wasserstein distances, leave-one-out harness."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.spatial.distance import cdist

from .errors import DimensionError, NumericalError, SBError, ValidationError
from .fields import DriftField
from .reference import ReferenceProcess
from .static_ot import row_stratified_pairs, sinkhorn_eot
from .tfsb import build_tfsb

__all__ = [
    "TrajectoryBatch",
    "simulate",
    "step_rng",
    "wasserstein2",
    "wasserstein1",
    "WassersteinEstimate",
    "LeaveOneOutConfig",
    "leave_one_out",
]

EXACT_LIMIT = 2048
SUBSAMPLE_BATCHES = 8
MAX_PAIRWISE = 10**8


@dataclass(frozen=True, eq=False)
class TrajectoryBatch:
    times: np.ndarray
    states: np.ndarray  # (particles, len(times), d)
    drift_kind: str
    seed: int

    def __post_init__(self):
        if self.times.ndim != 1 or np.any(np.diff(self.times) <= 0):
            raise ValidationError("trajectory times must be strictly increasing")
        if self.states.ndim != 3 or self.states.shape[1] != self.times.size:
            raise DimensionError(f"states of shape {self.states.shape} do not match {self.times.size} times")

    @property
    def endpoints(self):
        return self.states[:, -1]

    @property
    def start(self):
        return self.states[:, 0]


def step_rng(seed, step):
    """Independent generator for one time step, derived from ``seed`` by counter."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(step,)))


def simulate(drift: DriftField, ref: ReferenceProcess, x0_samples, steps=100, eps=1e-3, seed=0,
             *, t_start=None, t_end=None, noise_scale=1.0, record=True):
    """Integrate ``dx = (c x + alpha + u(x, t)) dt + sigma dW`` on a uniform grid.

    The grid runs from ``eps`` to ``1 - eps`` unless ``t_start`` / ``t_end``
    override it.  ``noise_scale`` multiplies the diffusion (``0`` gives plain
    Euler, used in tests).  With ``record=False`` only the two end states
    are kept.
    """
    if steps < 2:
        raise ValidationError(f"need at least 2 steps, got {steps}")
    if not 0.0 < eps < 0.5:
        raise ValidationError(f"eps must lie in (0, 0.5), got {eps}")
    t0 = eps if t_start is None else float(t_start)
    t1 = 1.0 - eps if t_end is None else float(t_end)
    if not 0.0 <= t0 < t1 <= 1.0:
        raise ValidationError(f"invalid time window [{t0}, {t1}]")
    x = np.array(np.atleast_2d(x0_samples), dtype=float)
    if drift is not None and x.shape[1] != drift.dim:
        raise DimensionError(f"start points have dimension {x.shape[1]}, drift expects {drift.dim}")
    times = np.linspace(t0, t1, steps + 1)
    k, d = x.shape
    states = np.empty((k, steps + 1 if record else 2, d))
    states[:, 0] = x
    for j in range(steps):
        t = times[j]
        dt = times[j + 1] - t
        try:
            u = drift(x, t) if drift is not None else 0.0
        except SBError as exc:
            raise type(exc)(f"drift failed at step {j} (t={t:.4g}): {exc}") from exc
        noise = step_rng(seed, j).standard_normal((k, d))
        x = x + dt * (ref.drift(x, t) + u) + noise_scale * float(ref.sigma(t)) * np.sqrt(dt) * noise
        bad = ~np.all(np.isfinite(x), axis=1)
        if bad.any():
            raise NumericalError(f"particle {int(np.flatnonzero(bad)[0])} became non-finite at step {j + 1}")
        if record:
            states[:, j + 1] = x
    if not record:
        states[:, 1] = x
        times = times[[0, -1]]
    return TrajectoryBatch(times, states, getattr(drift, "kind", "none"), seed)


@dataclass(frozen=True)
class WassersteinEstimate:
    value: float
    stderr: float = 0.0

    def __float__(self):
        return self.value


def _exact_cost(a, b, metric):
    p, q = len(a), len(b)
    if p * q > MAX_PAIRWISE:
        raise ValidationError(f"exact transport on {p} x {q} points exceeds the {MAX_PAIRWISE:.0e} entry guard")
    cost = cdist(a, b, metric)
    if p == q:
        rows, cols = linear_sum_assignment(cost)
        return float(cost[rows, cols].mean())
    # unequal sizes: transportation LP with uniform weights
    a_eq_rows = np.kron(np.eye(p), np.ones(q))
    a_eq_cols = np.kron(np.ones(p), np.eye(q))
    res = linprog(cost.ravel(), A_eq=np.vstack([a_eq_rows, a_eq_cols]),
                  b_eq=np.concatenate([np.full(p, 1.0 / p), np.full(q, 1.0 / q)]),
                  bounds=(0, None), method="highs")
    if res.status != 0:
        raise NumericalError(f"transport LP failed: {res.message}")
    return float(res.fun)


def _prep(a, b):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if len(a) < 1 or len(b) < 1:
        raise ValidationError("both point sets need at least one point")
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return a, b


def _subsample_batches(n, size, batches, rng):
    if n >= batches * size:
        perm = rng.permutation(n)
        return [perm[i * size:(i + 1) * size] for i in range(batches)]
    return [rng.choice(n, size, replace=False) for _ in range(batches)]


def _wasserstein(a, b, mode, seed, batches, size, metric, power):
    a, b = _prep(a, b)
    if mode == "exact":
        if len(a) == len(b) and metric == "sqeuclidean" and np.array_equal(a, b):
            return WassersteinEstimate(0.0)
        return WassersteinEstimate(_exact_cost(a, b, metric) ** (1.0 / power))
    if mode != "subsample":
        raise ValidationError(f"unknown mode {mode!r}; use 'exact' or 'subsample'")
    if size >= len(a) and size >= len(b):
        return WassersteinEstimate(_exact_cost(a, b, metric) ** (1.0 / power))
    size = min(size, len(a), len(b))
    rng = np.random.default_rng(seed)
    ia = _subsample_batches(len(a), size, batches, rng)
    ib = _subsample_batches(len(b), size, batches, rng)
    vals = np.array([_exact_cost(a[i], b[j], metric) ** (1.0 / power) for i, j in zip(ia, ib)])
    stderr = float(vals.std(ddof=1) / np.sqrt(batches)) if batches > 1 else 0.0
    return WassersteinEstimate(float(vals.mean()), stderr)


def wasserstein2(a, b, mode="exact", *, seed=0, batches=SUBSAMPLE_BATCHES, size=EXACT_LIMIT):
    """Empirical 2-Wasserstein distance between uniform point clouds.

    ``mode="exact"`` solves the assignment (equal sizes) or transportation LP.
    ``mode="subsample"`` averages exact values over ``batches`` random
    subsets of ``size`` points from each cloud and reports a standard error.
    """
    return _wasserstein(a, b, mode, seed, batches, size, "sqeuclidean", 2.0)


def wasserstein1(a, b, mode="exact", *, seed=0, batches=SUBSAMPLE_BATCHES, size=EXACT_LIMIT):
    return _wasserstein(a, b, mode, seed, batches, size, "euclidean", 1.0)


@dataclass(frozen=True)
class LeaveOneOutConfig:
    """Settings for :func:`leave_one_out`.

    ``times`` are the snapshot times (default ``0, 1, ..., K-1``);
    ``pairing`` is ``sinkhorn`` or ``independent`` (a baseline).  Every
    point of the earlier snapshot gets ``pairs_per_point`` partners so that
    the particles pushed forward all sit on the support of the pairs.
    """

    ref: ReferenceProcess
    times: tuple | None = None
    pairing: str = "sinkhorn"
    pairs_per_point: int = 1
    steps: int = 100
    eps: float = 1e-3
    seed: int = 0
    w1_mode: str = "subsample"


def leave_one_out(snapshots, cfg: LeaveOneOutConfig):
    """Hold out each interior snapshot and predict it from its neighbours.

    The bridge spans snapshots ``k-1`` and ``k+1``; its unit time is mapped
    to that gap and particles from ``k-1`` are pushed to the held-out time.
    Returns one W1 estimate per interior index.
    """
    snaps = [np.atleast_2d(np.asarray(s, dtype=float)) for s in snapshots]
    if len(snaps) < 3:
        raise ValidationError(f"leave-one-out needs at least 3 snapshots, got {len(snaps)}")
    if len({s.shape[1] for s in snaps}) != 1:
        raise DimensionError("snapshots do not share one dimension")
    times = np.arange(len(snaps), dtype=float) if cfg.times is None else np.asarray(cfg.times, dtype=float)
    if times.size != len(snaps) or np.any(np.diff(times) <= 0):
        raise ValidationError("snapshot times must be strictly increasing, one per snapshot")
    if cfg.pairing not in ("sinkhorn", "independent"):
        raise ValidationError(f"unknown pairing {cfg.pairing!r}")
    scores = {}
    for k in range(1, len(snaps) - 1):
        gap = times[k + 1] - times[k - 1]
        ref = cfg.ref.time_rescaled(gap)
        left, right = snaps[k - 1], snaps[k + 1]
        if cfg.pairing == "sinkhorn":
            pairs = row_stratified_pairs(sinkhorn_eot(left, right, ref), cfg.pairs_per_point, cfg.seed + k)
        else:
            rng = np.random.default_rng(cfg.seed + k)
            idx = rng.integers(0, len(right), (len(left), cfg.pairs_per_point))
            pairs = (np.repeat(left, cfg.pairs_per_point, axis=0), right[idx.ravel()])
        drift = build_tfsb(pairs, ref)
        s = (times[k] - times[k - 1]) / gap
        traj = simulate(drift, ref, left, cfg.steps, cfg.eps, cfg.seed + k, t_end=s, record=False)
        scores[k] = wasserstein1(traj.endpoints, snaps[k], cfg.w1_mode, seed=cfg.seed + k)
    return scores
