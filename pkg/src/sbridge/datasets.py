"""Two-dimensional benchmark distributions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .measures import GaussianMeasure

DATASETS = ("8gaussians", "moons", "stdnormal", "gaussian")

EIGHT_GAUSSIAN_RADIUS = 4.0 / np.sqrt(2.0)
EIGHT_GAUSSIAN_STD = 0.2
MOONS_NOISE = 0.1


def eight_gaussian_centers():
    k = np.arange(8)
    return EIGHT_GAUSSIAN_RADIUS * np.stack([np.cos(k * np.pi / 4), np.sin(k * np.pi / 4)], axis=1)


@dataclass(frozen=True)
class Dataset2D:
    """Name, size and seed of a generated point cloud.

    ``params`` is only read by ``gaussian``: ``mean`` (length d) and ``cov``
    (d x d or flat row-major).
    """

    name: str
    n: int
    seed: int = 0
    params: dict = field(default_factory=dict)


def _eight_gaussians(n, rng):
    centers = eight_gaussian_centers()
    idx = rng.integers(0, 8, n)
    return centers[idx] + EIGHT_GAUSSIAN_STD * rng.standard_normal((n, 2))


def _moons(n, rng):
    n_outer = n // 2
    n_inner = n - n_outer
    th_o = rng.uniform(0.0, np.pi, n_outer)
    th_i = rng.uniform(0.0, np.pi, n_inner)
    outer = np.stack([np.cos(th_o), np.sin(th_o)], axis=1)
    inner = np.stack([1.0 - np.cos(th_i), 0.5 - np.sin(th_i)], axis=1)
    x = np.concatenate([outer, inner])
    x += MOONS_NOISE * rng.standard_normal(x.shape)
    x = x[rng.permutation(n)]
    # standardise by population moments so the law does not depend on the seed
    return (x - _MOONS_MEAN) / _MOONS_STD


def _moons_moments():
    # exact moments of the mixture above: theta ~ U(0, pi), isotropic noise
    e_cos, e_sin = 0.0, 2.0 / np.pi
    e_sin2 = 0.5
    mean = np.array([0.5 * (e_cos + 1.0 - e_cos), 0.5 * (e_sin + 0.5 - e_sin)])
    ex2 = 0.5 * (0.5 + (1.0 + 0.5))
    ey2 = 0.5 * (e_sin2 + (0.25 - e_sin + e_sin2))
    var = np.array([ex2, ey2]) - mean**2 + MOONS_NOISE**2
    return mean, np.sqrt(var)


_MOONS_MEAN, _MOONS_STD = _moons_moments()


def gen_dataset(spec: Dataset2D) -> np.ndarray:
    if spec.n < 1:
        raise ValidationError("n must be at least 1")
    rng = np.random.default_rng(spec.seed)
    name = spec.name.lower()
    if name == "8gaussians":
        return _eight_gaussians(spec.n, rng)
    if name == "moons":
        return _moons(spec.n, rng)
    if name == "stdnormal":
        return rng.standard_normal((spec.n, 2))
    if name == "gaussian":
        mean = spec.params.get("mean", [0.0, 0.0])
        cov = spec.params.get("cov", np.eye(len(mean)))
        return GaussianMeasure.from_flat(mean, np.ravel(cov)).sample(spec.n, rng)
    raise ValidationError(f"unknown dataset {spec.name!r}; valid names: {', '.join(DATASETS)}")
