import numpy as np
import pytest

from sbridge import (DimensionError, DriftField, GaussianMeasure, LeaveOneOutConfig, NumericalError, SBError,
                     ValidationError, build_gaussian_drift, build_reference, leave_one_out, simulate,
                     wasserstein1, wasserstein2)
from sbridge.sim_eval import TrajectoryBatch, step_rng
from oracles import brute_force_w2


class Constant(DriftField):
    kind = "const"

    def __init__(self, v):
        self.v = np.asarray(v, dtype=float)
        self.dim = self.v.size

    def _evaluate(self, x, t):
        return np.broadcast_to(self.v, x.shape).copy()


class Failing(DriftField):
    kind = "failing"
    dim = 2

    def __init__(self, bad_after, mode):
        self.bad_after = bad_after
        self.mode = mode

    def _evaluate(self, x, t):
        if t > self.bad_after:
            if self.mode == "raise":
                raise NumericalError("boom")
            out = np.zeros_like(x)
            out[3] = np.inf
            return out
        return np.zeros_like(x)


def test_deterministic_euler():
    ref = build_reference("VE")
    x0 = np.random.default_rng(0).normal(size=(10, 2))
    v = np.array([0.5, -2.0])
    traj = simulate(Constant(v), ref, x0, steps=50, eps=1e-3, noise_scale=0.0)
    assert np.allclose(traj.endpoints, x0 + v * (1 - 2e-3), rtol=1e-13)
    assert traj.times[0] == pytest.approx(1e-3) and traj.times[-1] == pytest.approx(1 - 1e-3)


def test_brownian_variance():
    eps = 1e-3
    traj = simulate(None, build_reference("VE", sigma=1.0), np.zeros((100_000, 1)), steps=100, eps=eps,
                    seed=1, record=False)
    var = traj.endpoints.var()
    expected = 1 - 2 * eps
    assert abs(var - expected) < 3 * expected * np.sqrt(2 / 100_000)


def test_reference_drift_is_applied():
    ref = build_reference("VP", beta_min=1.0, beta_max=1.0)
    traj = simulate(None, ref, np.ones((1, 1)), steps=4000, eps=1e-3, noise_scale=0.0)
    assert traj.endpoints[0, 0] == pytest.approx(np.exp(-0.5 * (1 - 2e-3)), rel=1e-3)


def test_seeded_and_record_modes_agree():
    ref = build_reference("VE")
    x0 = np.random.default_rng(2).normal(size=(30, 2))
    a = simulate(Constant([1.0, 0.0]), ref, x0, steps=20, seed=7)
    b = simulate(Constant([1.0, 0.0]), ref, x0, steps=20, seed=7, record=False)
    c = simulate(Constant([1.0, 0.0]), ref, x0, steps=20, seed=8, record=False)
    assert a.states.shape == (30, 21, 2) and b.states.shape == (30, 2, 2)
    assert np.array_equal(a.endpoints, b.endpoints)
    assert not np.array_equal(a.endpoints, c.endpoints)


def test_step_streams_do_not_depend_on_batch_split():
    ref = build_reference("VE")
    x0 = np.zeros((6, 1))
    whole = simulate(None, ref, x0, steps=5, seed=3).states
    first = simulate(None, ref, x0[:3], steps=5, seed=3).states
    # the same step generator feeds row i of the noise, so the first rows coincide
    assert np.array_equal(step_rng(3, 0).standard_normal((6, 1))[:3], step_rng(3, 0).standard_normal((3, 1)))
    assert np.array_equal(whole[:3], first)


def test_errors_carry_step_and_particle():
    ref = build_reference("VE")
    x0 = np.zeros((5, 2))
    with pytest.raises(NumericalError, match="step"):
        simulate(Failing(0.5, "raise"), ref, x0, steps=10)
    with pytest.raises(NumericalError, match="particle 3"):
        simulate(Failing(0.5, "nan"), ref, x0, steps=10)
    with pytest.raises(ValidationError):
        simulate(None, ref, x0, steps=1)
    with pytest.raises(ValidationError):
        simulate(None, ref, x0, eps=0.5)
    with pytest.raises(DimensionError):
        simulate(Constant([1.0, 2.0, 3.0]), ref, x0)


def test_trajectory_batch_validation():
    with pytest.raises(ValidationError):
        TrajectoryBatch(np.array([0.0, 0.0]), np.zeros((1, 2, 1)), "x", 0)
    with pytest.raises(DimensionError):
        TrajectoryBatch(np.array([0.0, 1.0]), np.zeros((1, 3, 1)), "x", 0)


def test_gaussian_drift_moments():
    mu0 = GaussianMeasure(np.array([-1.0, 0.5]), np.array([[0.5, 0.1], [0.1, 0.3]]))
    mu1 = GaussianMeasure(np.array([1.0, 1.0]), np.array([[1.0, -0.3], [-0.3, 0.8]]))
    ref = build_reference("VP")
    g = build_gaussian_drift(mu0, mu1, ref)
    rng = np.random.default_rng(4)
    # start on the bridge marginal at eps so only the sampler error remains
    x0 = g.marginal(1e-3).sample(20_000, rng)
    end = simulate(g, ref, x0, steps=400, seed=5, record=False).endpoints
    target = g.marginal(1 - 1e-3)
    assert np.allclose(end.mean(0), target.mean, atol=0.05)
    assert np.linalg.norm(np.cov(end.T) - target.cov) <= 0.1 * np.linalg.norm(target.cov)


def test_w2_examples():
    a = np.arange(4.0)[:, None]
    b = np.array([0.0, 1.0, 2.0, 4.0])[:, None]
    assert float(wasserstein2(a, b)) == pytest.approx(0.5)
    assert float(wasserstein2(a, b)) == pytest.approx(brute_force_w2(a, b))
    assert float(wasserstein2(a, a)) == 0.0
    x, y = np.array([[1.0, 2.0]]), np.array([[4.0, 6.0]])
    assert float(wasserstein2(x, y)) == pytest.approx(5.0)


def test_w2_matches_brute_force():
    rng = np.random.default_rng(6)
    for _ in range(5):
        a, b = rng.normal(size=(7, 2)), rng.normal(size=(7, 2))
        assert float(wasserstein2(a, b)) == pytest.approx(brute_force_w2(a, b), rel=1e-12)


def test_w2_is_a_metric():
    rng = np.random.default_rng(7)
    for _ in range(10):
        a, b, c = (rng.normal(size=(40, 3)) for _ in range(3))
        ab, ba = float(wasserstein2(a, b)), float(wasserstein2(b, a))
        assert abs(ab - ba) <= 1e-12
        assert ab <= float(wasserstein2(a, c)) + float(wasserstein2(c, b)) + 1e-12
    a = rng.normal(size=(30, 2))
    assert float(wasserstein2(a, a[rng.permutation(30)])) == pytest.approx(0.0, abs=1e-12)
    b = a.copy()
    b[0] += 1e-3
    assert float(wasserstein2(a, b)) > 0


def test_unequal_sizes_use_transport_lp():
    rng = np.random.default_rng(8)
    a = rng.normal(size=(5, 2))
    assert float(wasserstein2(a, np.repeat(a, 3, axis=0))) == pytest.approx(0.0, abs=1e-7)
    b = rng.normal(size=(3, 2))
    # W2 between a and b equals W2 between their size-15 replications, which assignment solves
    want = float(wasserstein2(np.repeat(a, 3, axis=0), np.repeat(b, 5, axis=0)))
    assert float(wasserstein2(a, b)) == pytest.approx(want, rel=1e-7)


def test_w1_examples():
    a = np.arange(4.0)[:, None]
    b = np.array([0.0, 1.0, 2.0, 4.0])[:, None]
    assert float(wasserstein1(a, b)) == pytest.approx(0.25)


def test_exact_memory_guard():
    big = np.zeros((10_001, 1))
    with pytest.raises(ValidationError, match="guard"):
        wasserstein2(big, big + 1.0)
    with pytest.raises(ValidationError):
        wasserstein2(big[:3], big[:3], mode="sinkhorn")
    with pytest.raises(DimensionError):
        wasserstein2(np.zeros((2, 2)), np.zeros((2, 3)))


def test_subsample_upper_bounds_exact():
    rng = np.random.default_rng(9)
    gaps = []
    for rep in range(12):
        a = rng.normal(size=(800, 2))
        b = rng.normal(size=(800, 2)) + [0.5, 0.0]
        exact = float(wasserstein2(a, b))
        est = wasserstein2(a, b, "subsample", seed=rep, batches=8, size=100)
        gaps.append(est.value - exact)
        assert est.stderr > 0
    gaps = np.array(gaps)
    assert gaps.mean() >= -3 * gaps.std(ddof=1) / np.sqrt(gaps.size)


def test_subsample_falls_back_to_exact_for_small_sets():
    rng = np.random.default_rng(10)
    a, b = rng.normal(size=(50, 2)), rng.normal(size=(60, 2))
    est = wasserstein2(a, b, "subsample")
    assert est.value == pytest.approx(float(wasserstein2(a, b))) and est.stderr == 0.0


def _ou_snapshots(seed=0, n=1000, theta=0.3, noise=0.3):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2))
    mu = np.array([4.0, 0.0])
    snaps = [x.copy()]
    dt = 0.01
    for _ in range(2):
        for _ in range(100):
            x = x - theta * (x - mu) * dt + noise * np.sqrt(dt) * rng.normal(size=x.shape)
        snaps.append(x.copy())
    return snaps


def test_leave_one_out_beats_independent_pairing():
    snaps = _ou_snapshots()
    ref = build_reference("VE", sigma=0.3)
    sb = leave_one_out(snaps, LeaveOneOutConfig(ref=ref, pairing="sinkhorn", steps=50))
    base = leave_one_out(snaps, LeaveOneOutConfig(ref=ref, pairing="independent", steps=50))
    assert list(sb) == [1]
    assert sb[1].value < base[1].value


def test_leave_one_out_identical_snapshots_reports_noise_floor():
    x = np.random.default_rng(11).normal(size=(300, 2))
    out = leave_one_out([x, x, x, x], LeaveOneOutConfig(ref=build_reference("VE", sigma=0.2), steps=20))
    assert sorted(out) == [1, 2]
    assert all(np.isfinite(v.value) and v.value < 1.0 for v in out.values())


def test_leave_one_out_errors():
    x = np.zeros((10, 2))
    ref = build_reference("VE")
    with pytest.raises(ValidationError):
        leave_one_out([x, x], LeaveOneOutConfig(ref=ref))
    with pytest.raises(ValidationError):
        leave_one_out([x, x, x], LeaveOneOutConfig(ref=ref, times=(0.0, 2.0, 1.0)))
    with pytest.raises(ValidationError):
        leave_one_out([x, x, x], LeaveOneOutConfig(ref=ref, pairing="nearest"))
    with pytest.raises(DimensionError):
        leave_one_out([x, x, np.zeros((10, 3))], LeaveOneOutConfig(ref=ref))


def test_errors_are_in_one_hierarchy():
    assert issubclass(NumericalError, SBError) and issubclass(ValidationError, ValueError)
