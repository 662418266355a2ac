import numpy as np
import pytest
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from sbridge import Dataset2D, ValidationError, gen_dataset
from sbridge.datasets import DATASETS, EIGHT_GAUSSIAN_STD, eight_gaussian_centers


def _single_linkage_clusters(x, cut):
    # clusters of single linkage cut at ``cut`` are the components of the radius graph
    pairs = cKDTree(x).query_pairs(cut, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(x), len(x)))
    return connected_components(graph, directed=False)[0]


def test_stdnormal_moments():
    x = gen_dataset(Dataset2D("stdnormal", 100_000, seed=0))
    assert np.all(np.abs(x.mean(0)) < 0.02) and np.all(np.abs(x.var(0) - 1) < 0.02)


def test_eight_gaussians_first_point_frozen():
    a = gen_dataset(Dataset2D("8gaussians", 10, seed=1))
    b = gen_dataset(Dataset2D("8gaussians", 10, seed=1))
    assert a.tobytes() == b.tobytes()
    # value recorded from the generator at seed 1
    assert a[0].tolist() == [float.fromhex(h) for h in FIRST_POINT_HEX]


FIRST_POINT_HEX = ("-0x1.e9254779fc721p+0", "0x1.e4820beaede28p+0")


def test_eight_gaussians_layout():
    centers = eight_gaussian_centers()
    assert np.allclose(np.linalg.norm(centers, axis=1), 4 / np.sqrt(2))
    x = gen_dataset(Dataset2D("8gaussians", 40_000, seed=2))
    nearest = np.argmin(np.linalg.norm(x[:, None] - centers[None], axis=-1), axis=1)
    counts = np.bincount(nearest, minlength=8)
    assert np.all(np.abs(counts - 5000) < 4 * np.sqrt(5000))
    spread = x - centers[nearest]
    assert np.std(spread) == pytest.approx(EIGHT_GAUSSIAN_STD, rel=0.02)


def test_moons_standardised():
    x = gen_dataset(Dataset2D("moons", 200_000, seed=3))
    assert np.all(np.abs(x.mean(0)) < 0.01) and np.all(np.abs(x.std(0) - 1) < 0.01)


@pytest.mark.xfail(strict=True, reason="noise 0.1 bridges the two half-circles: the radius-0.3 graph is connected")
def test_moons_two_single_linkage_clusters():
    x = gen_dataset(Dataset2D("moons", 10_000, seed=4))
    assert _single_linkage_clusters(x, 0.3) == 2


def test_moons_noiseless_shape_has_two_clusters():
    # the clustering oracle itself separates the two arcs once noise is removed
    th = np.linspace(0, np.pi, 2000)
    outer = np.stack([np.cos(th), np.sin(th)], 1)
    inner = np.stack([1 - np.cos(th), 0.5 - np.sin(th)], 1)
    assert _single_linkage_clusters(np.concatenate([outer, inner]), 0.3) == 2


def test_custom_gaussian():
    spec = Dataset2D("gaussian", 50_000, seed=5, params={"mean": [1.0, -2.0], "cov": [2.0, 0.5, 0.5, 1.0]})
    x = gen_dataset(spec)
    assert np.allclose(x.mean(0), [1.0, -2.0], atol=0.03)
    assert np.allclose(np.cov(x.T), [[2.0, 0.5], [0.5, 1.0]], atol=0.05)


def test_unknown_name_lists_choices():
    with pytest.raises(ValidationError) as info:
        gen_dataset(Dataset2D("spirals", 10))
    for name in DATASETS:
        assert name in str(info.value)
    with pytest.raises(ValidationError):
        gen_dataset(Dataset2D("moons", 0))


@pytest.mark.parametrize("name", ["8gaussians", "moons", "stdnormal"])
def test_generators_are_finite_and_seeded(name):
    a = gen_dataset(Dataset2D(name, 500, seed=6))
    assert a.shape == (500, 2) and np.all(np.isfinite(a))
    assert not np.array_equal(a, gen_dataset(Dataset2D(name, 500, seed=7)))
