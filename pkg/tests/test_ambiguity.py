import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unimodal_drcc.ambiguity import (
    AmbiguityConfig,
    UncertainRow,
    cut_d1,
    cut_d2_at,
    cut_k,
    d4_tau_star,
    k_factor,
    mode_feasibility_constraints,
    unimodal_shape_root,
)
from unimodal_drcc.errors import InvalidTau, UnsupportedRegime, ValidationError
from unimodal_drcc.uncertainty import (
    EllipsoidSupport,
    MomentData,
    PointSupport,
    RectangleSupport,
    UnimodalityConfig,
)

STD = MomentData.from_mean_cov([0.0, 0.0], np.eye(2))


def test_d1_coefficient():
    row = UncertainRow.constant([3.0, 4.0], 10.0)
    cut = cut_d1(STD, 0.05, row)
    assert cut.lhs([0.0]) == pytest.approx(5.0 * math.sqrt(19.0))
    assert cut.rhs([0.0]) == pytest.approx(10.0)


def test_d1_matches_cantelli():
    # one-sided Chebyshev: P(xi > mu + k s) <= 1 / (1 + k^2) = eps at the D1 constant
    k = k_factor("D1", UnimodalityConfig(1.0, 0.05))
    assert 1.0 / (1.0 + k * k) == pytest.approx(0.05)


def test_d1_limit_at_half():
    assert k_factor("D1", UnimodalityConfig(1.0, 0.5 - 1e-12)) == pytest.approx(1.0, abs=1e-5)


def test_zero_row_cut_is_trivial():
    cut = cut_d1(STD, 0.05, UncertainRow.constant([0.0, 0.0], 2.0))
    assert cut.is_linear
    assert cut.residual([0.0]) == pytest.approx(-2.0)


def test_d2_at_mean_and_tau0_degenerates():
    u = UnimodalityConfig(1.0, 0.05)
    row = UncertainRow.constant([1.0, -2.0], 3.0)
    mom = MomentData.from_mean_cov([1.0, 2.0], [[2.0, 0.3], [0.3, 1.0]])
    cut = cut_d2_at(mom, mom.mu, u, u.tau0, row)
    assert cut.lhs([0.0]) == pytest.approx(0.0, abs=1e-12)
    assert cut.rhs([0.0]) == pytest.approx(u.tau0 * (3.0 - mom.mu @ [1.0, -2.0]))


def test_tau0_value():
    assert UnimodalityConfig(1.0, 0.05).tau0 == pytest.approx(1.05263, abs=1e-5)


def test_d2_rejects_small_tau():
    u = UnimodalityConfig(1.0, 0.05)
    with pytest.raises(InvalidTau):
        cut_d2_at(STD, [0.0, 0.0], u, 1.0, UncertainRow.constant([1.0, 0.0], 1.0))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1.0, 1.0), min_size=2, max_size=2),
       st.lists(st.floats(-3.0, 3.0), min_size=2, max_size=2),
       st.sampled_from([1.0, 2.0, 3.0]))
def test_shape_root_norm_identity(mode, a, alpha):
    # ||Lambda a||^2 = R^2 - (alpha h)^2 / alpha^2 with h = a^T (mu - m) / alpha
    mom = MomentData.from_mean_cov([0.2, -0.1], [[2.0, 0.4], [0.4, 1.5]])
    a = np.array(a)
    mode = np.array(mode)
    root = unimodal_shape_root(mom, mode, alpha)
    R2 = a @ mom.scaled_covariance(alpha) @ a
    h = a @ (mom.mu - mode) / alpha
    assert float(np.sum((root @ a) ** 2)) == pytest.approx(R2 - h * h, rel=1e-9, abs=1e-9)


def test_k_factors():
    u = UnimodalityConfig(1.0, 0.05)
    assert k_factor("D1", u) == pytest.approx(4.358899, abs=1e-6)
    assert d4_tau_star(u) == pytest.approx(1.5789, abs=1e-4)
    assert k_factor("D4", u) == pytest.approx(2.7607, abs=1e-4)
    assert k_factor("D5", u) == pytest.approx(2.8087, abs=1e-4)
    with pytest.raises(ValueError):
        k_factor("D2", u)


def test_d4_constant_is_a_grid_maximum():
    u = UnimodalityConfig(2.0, 0.1)
    taus = np.linspace(u.tau0, 10.0, 200001)
    g = np.sqrt(np.maximum((1 - u.epsilon - taus ** (-u.alpha)) / u.epsilon, 0.0))
    grid = math.sqrt((u.alpha + 2) / u.alpha) * np.max(g / taus)
    assert k_factor("D4", u) == pytest.approx(grid, rel=1e-6)


def test_d5_regime():
    with pytest.raises(UnsupportedRegime):
        k_factor("D5", UnimodalityConfig(2.0, 0.05))
    with pytest.raises(UnsupportedRegime):
        AmbiguityConfig("D5", UnimodalityConfig(1.0, 0.2))


def test_config_requires_support():
    with pytest.raises(ValidationError):
        AmbiguityConfig("D2", UnimodalityConfig())
    with pytest.raises(ValidationError):
        AmbiguityConfig("D3", UnimodalityConfig())


def test_k_cut_matches_scalar_formula():
    mom = MomentData.from_mean_cov([1.0, 2.0], [[2.0, 0.3], [0.3, 1.0]])
    row = UncertainRow.constant([1.0, -1.0], 5.0)
    cut = cut_k(mom, 2.5, row)
    a = np.array([1.0, -1.0])
    assert cut.lhs([0.0]) == pytest.approx(2.5 * math.sqrt(a @ mom.covariance @ a))
    assert cut.rhs([0.0]) == pytest.approx(5.0 - mom.mu @ a)


def _affine_row():
    # a(x) = [x0, -x1] + [1, 0], b(x) = x0 + 2 x1 + 1
    return UncertainRow(np.array([[1.0, 0.0], [0.0, -1.0]]), [1.0, 0.0], [1.0, 2.0], 1.0)


def test_point_mode_constraint():
    row = _affine_row()
    mc = mode_feasibility_constraints(PointSupport([2.0, 1.0]), row)
    x = np.array([0.5, 0.25])
    lhs = row.a(x) @ [2.0, 1.0]
    assert mc.satisfied(x) == (lhs <= row.b(x))
    assert mc.n_aux == 0


def test_box_mode_constraint_is_l1():
    row = _affine_row()
    mc = mode_feasibility_constraints(RectangleSupport([-1.0, -1.0], [1.0, 1.0]), row)
    rng = np.random.default_rng(1)
    for _ in range(50):
        x = rng.normal(size=2) * 3
        a = row.a(x)
        holds = np.abs(a).sum() <= row.b(x)
        assert mc.satisfied(x, np.abs(a)) == holds


def test_ball_mode_constraint_is_norm():
    row = _affine_row()
    mc = mode_feasibility_constraints(EllipsoidSupport([0.0, 0.0], np.eye(2)), row)
    x = np.array([0.3, -0.2])
    assert mc.socs[0].residual(x) == pytest.approx(np.linalg.norm(row.a(x)) - row.b(x))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 10.0), st.sampled_from([1.1, 2.0, 5.0]))
def test_cuts_are_positively_homogeneous(lam, tau):
    mom = MomentData.from_mean_cov([1.0, 2.0], [[2.0, 0.3], [0.3, 1.0]])
    row = _affine_row()
    x = np.array([0.7, -0.4])
    u = UnimodalityConfig(1.0, 0.05)
    for make in (lambda r: cut_d1(mom, 0.05, r), lambda r: cut_d2_at(mom, [0.5, 1.0], u, tau, r)):
        base, scaled = make(row), make(row.scaled(lam))
        assert scaled.lhs(x) == pytest.approx(lam * base.lhs(x), rel=1e-10)
        assert scaled.rhs(x) == pytest.approx(lam * base.rhs(x), rel=1e-10, abs=1e-10)
