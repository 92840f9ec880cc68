import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unimodal_drcc.errors import DegenerateMoments, DimensionMismatch, ValidationError
from unimodal_drcc.experiment import SyntheticSpec, generate_synthetic_pool
from unimodal_drcc.uncertainty import (
    EllipsoidSupport,
    MomentData,
    PointSupport,
    RectangleSupport,
    ScenarioPool,
    UnimodalityConfig,
    build_mode_support,
    check_assumption1,
    estimate_mode_histogram,
    estimate_moments,
    max_quadratic_over_ellipsoid,
)


def test_moments_of_symmetric_cross():
    pool = ScenarioPool([[1, 0], [-1, 0], [0, 1], [0, -1]])
    mom = estimate_moments(pool)
    assert np.allclose(mom.mu, 0.0)
    assert np.allclose(mom.sigma, np.diag([0.5, 0.5]))
    assert np.allclose(mom.covariance, np.diag([0.5, 0.5]))


def test_repeated_sample_is_degenerate():
    with pytest.raises(DegenerateMoments):
        estimate_moments(ScenarioPool(np.tile([1.0, 2.0], (10, 1))))


def test_moments_of_skewed_draws_within_three_standard_errors():
    spec = SyntheticSpec()
    pool = generate_synthetic_pool(spec, seed=11, size=10000)
    mom = estimate_moments(pool)
    se = np.sqrt(np.diag(spec.true_covariance) / len(pool))
    assert np.all(np.abs(mom.mu - spec.true_mean) <= 3 * se)
    # variance check with a loose bound from the sample fourth moment
    xs = pool.samples - spec.true_mean
    var_se = np.sqrt(np.var(xs**2, axis=0) / len(pool))
    assert np.all(np.abs(np.diag(mom.covariance) - np.diag(spec.true_covariance)) <= 3 * var_se)


def test_pool_validation_and_csv_round_trip(tmp_path):
    with pytest.raises(ValidationError):
        ScenarioPool(np.zeros((0, 2)))
    with pytest.raises(ValidationError):
        ScenarioPool([[np.nan, 1.0]])
    pool = ScenarioPool(np.random.default_rng(0).normal(size=(7, 3)))
    pool.to_csv(tmp_path / "p.csv")
    back = ScenarioPool.from_csv(tmp_path / "p.csv")
    assert np.array_equal(back.samples, pool.samples)


def test_subsample_is_without_replacement():
    pool = ScenarioPool(np.arange(20.0))
    sub = pool.subsample(20, np.random.default_rng(3))
    assert sorted(sub.samples[:, 0]) == list(range(20))
    with pytest.raises(ValidationError):
        pool.subsample(21, np.random.default_rng(3))


def test_batches_are_disjoint_and_checked():
    pool = ScenarioPool(np.arange(10.0))
    b = pool.batches(2, 5)
    assert [x[0, 0] for x in b] == [0.0, 5.0]
    with pytest.raises(ValidationError):
        pool.batches(3, 5)


def test_moment_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        MomentData([0.0, 0.0], np.eye(3))


def test_histogram_mode_single_cell():
    xs = np.concatenate([np.full(50, 0.3), [0.0, 15.0]])
    pool = ScenarioPool(xs)
    # 15 bins over [0, 15]: the fullest cell is [0, 1)
    assert estimate_mode_histogram(pool, 15) == pytest.approx([0.5])


def test_histogram_mode_tie_goes_to_first_cell():
    pool = ScenarioPool(np.arange(4.0) + 0.5)
    assert estimate_mode_histogram(pool, 4) == pytest.approx([0.875])


def test_histogram_needs_two_bins():
    with pytest.raises(ValueError):
        estimate_mode_histogram(ScenarioPool(np.arange(4.0)), 1)


def test_rectangle_support_from_estimates():
    sup = build_mode_support([(-4.44, -4.45), (0.10, 0.24)], "rectangle")
    assert np.allclose(sup.k_lo, [-4.44, -4.45])
    assert np.allclose(sup.k_hi, [0.10, 0.24])


def test_single_estimate_gives_degenerate_box():
    sup = build_mode_support([(1.0, 2.0)], "rectangle")
    assert np.allclose(sup.k_lo, sup.k_hi)
    assert sup.contains([1.0, 2.0])


def test_collinear_ellipsoid_is_regularized_and_contains_estimates():
    est = np.array([[t, 2 * t] for t in np.linspace(-1, 1, 9)])
    sup = build_mode_support(est, "ellipsoid")
    assert np.linalg.eigvalsh(sup.shape)[0] >= 1e-8 * 0.999
    assert all(sup.contains(m, tol=1e-6) for m in est)


def test_ellipsoid_contains_random_cloud():
    est = np.random.default_rng(5).normal(size=(40, 2)) @ np.array([[2.0, 0.0], [1.0, 0.5]])
    sup = build_mode_support(est, "ellipsoid")
    assert all(sup.contains(m, tol=1e-6) for m in est)


def test_unknown_support_shape():
    with pytest.raises(ValueError):
        build_mode_support([(0.0, 0.0)], "triangle")


def test_support_ranges():
    a = np.array([1.0, -2.0])
    box = RectangleSupport([-1.0, 0.0], [1.0, 1.0])
    assert box.support_range(a) == pytest.approx((-3.0, 1.0))
    ball = EllipsoidSupport([0.0, 0.0], np.eye(2))
    assert ball.support_range(a) == pytest.approx((-math.sqrt(5), math.sqrt(5)))
    pt = PointSupport([1.0, 1.0])
    assert pt.support_range(a) == pytest.approx((-1.0, -1.0))


def test_assumption1_mode_at_mean():
    mom = MomentData.from_mean_cov([0.0, 0.0], np.eye(2))
    assert check_assumption1(mom, PointSupport([0.0, 0.0]), 1.0)


def test_assumption1_boundary():
    # ((a+2)/a) C = 3 I, so the quadratic form is ||m||^2 / 3 against a^2 = 1
    mom = MomentData.from_mean_cov([0.0, 0.0], np.eye(2))
    assert check_assumption1(mom, PointSupport([math.sqrt(3) - 1e-6, 0.0]), 1.0)
    assert not check_assumption1(mom, PointSupport([math.sqrt(3) + 1e-6, 0.0]), 1.0)


def test_assumption1_rectangle_uses_worst_vertex():
    mom = MomentData.from_mean_cov([0.0, 0.0], np.eye(2))
    assert check_assumption1(mom, RectangleSupport([-1.0, -1.0], [1.0, 1.0]), 1.0)
    assert not check_assumption1(mom, RectangleSupport([-1.0, -1.0], [1.0, 1.5]), 1.0)


def test_assumption1_on_synthetic_box():
    spec = SyntheticSpec()
    m = spec.true_mode
    assert check_assumption1(spec.true_moments, RectangleSupport(m - 1, m + 1), 1.0)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-3, 3), min_size=2, max_size=2),
    st.lists(st.floats(-2, 2), min_size=4, max_size=4),
)
def test_max_quadratic_over_ellipsoid_beats_sampling(v, b):
    v = np.array(v)
    B = np.array(b).reshape(2, 2)
    best = max_quadratic_over_ellipsoid(v, B)
    theta = np.linspace(0, 2 * np.pi, 2000)
    u = np.stack([np.cos(theta), np.sin(theta)])
    sampled = np.max(np.sum((v[:, None] + B @ u) ** 2, axis=0))
    assert best >= sampled - 1e-9 * max(1.0, sampled)
    assert best <= sampled * (1 + 1e-4) + 1e-9


def test_unimodality_config_domain():
    assert UnimodalityConfig(1.0, 0.05).tau0 == pytest.approx(1 / 0.95)
    with pytest.raises(ValidationError):
        UnimodalityConfig(0.5, 0.05)
    with pytest.raises(ValidationError):
        UnimodalityConfig(1.0, 0.6)


def test_moments_permutation_invariant():
    xs = np.random.default_rng(2).normal(size=(50, 3))
    a = estimate_moments(ScenarioPool(xs))
    b = estimate_moments(ScenarioPool(xs[::-1]))
    assert np.allclose(a.mu, b.mu) and np.allclose(a.sigma, b.sigma)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 20))
def test_histogram_mode_inside_bounding_box(seed, bins):
    xs = np.random.default_rng(seed).gamma(2.0, size=(200, 2))
    m = estimate_mode_histogram(ScenarioPool(xs), bins)
    assert np.all(m >= xs.min(axis=0)) and np.all(m <= xs.max(axis=0))


def test_assumption1_rectangle_agrees_with_sampling():
    rng = np.random.default_rng(9)
    for _ in range(100):
        L = rng.normal(size=(2, 2))
        mom = MomentData.from_mean_cov(rng.normal(size=2), L @ L.T + 0.1 * np.eye(2))
        lo = mom.mu + rng.normal(size=2)
        box = RectangleSupport(lo, lo + rng.uniform(0, 2, 2))
        exact = check_assumption1(mom, box, 1.0)
        pts = np.vstack([box.sample(rng, 10_000), box.vertices()])
        Q = np.linalg.inv(mom.scaled_covariance(1.0))
        d = mom.mu - pts
        sampled = bool(np.max(np.einsum("ij,jk,ik->i", d, Q, d)) < 1.0)
        assert exact == sampled
