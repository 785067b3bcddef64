import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trinomial_pde.params import (
    GeneratorBounds,
    MonotonicityWarning,
    build_params,
    check_monotone_coefficient,
    lambda_of,
    lambda_theta,
    p_lower,
    select_p,
    worst_case_monotone,
)


def quiet_params(*args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MonotonicityWarning)
        return build_params(*args, **kw)


def test_lambda_values():
    assert lambda_of(1 / 3, 0.0, 4) == pytest.approx(2.0)
    assert lambda_of(1 / 11, 0.0, 12) == pytest.approx(2.0)
    for d in (3, 5, 12):
        assert lambda_of(1 / 3, 2.0 / d, d) == pytest.approx(1.0)


def test_select_p_values():
    assert select_p(0.0, 2.0, 3) == pytest.approx(1 / 3)
    assert select_p(0.0, 2.0, 12) == pytest.approx(1 / 11)
    p = select_p(0.1, 1.5, 4)
    assert p == pytest.approx(0.2 / 1.9)
    grid = np.linspace(p_lower(0.1), 1 / 3, 20001)
    best = grid[np.argmax([lambda_of(q, 0.1, 4) for q in grid])]
    assert best == pytest.approx(p, abs=2e-5)


def test_select_p_warns_past_dominance_limit():
    with pytest.warns(MonotonicityWarning):
        assert select_p(0.5, 1.0, 5) == pytest.approx(1 / 3)


@pytest.mark.parametrize("theta,d", [(0.05, 6), (0.1, 4), (0.02, 12), (0.15, 10)])
def test_lambda_theta_is_supremum(theta, d):
    grid = np.linspace(p_lower(theta), 1 / 3, 4001)
    assert lambda_theta(theta, d) >= max(lambda_of(q, theta, d) for q in grid) - 1e-9


def test_lambda_theta_closed_form():
    theta, d = 0.05, 6
    a = 2.0 - (d - 3) * theta
    assert lambda_theta(theta, d) == pytest.approx(1.0 + a * a / (8.0 * theta * (1.0 + theta) * (d - 1)))


def test_recipe_for_unit_interval_three_dims():
    prm = build_params(GeneratorBounds(0.0, 0.5, 1.0, 3))
    assert prm.p == pytest.approx(1 / 3)
    assert prm.alpha_lo == pytest.approx(3 / 8)
    np.testing.assert_allclose(prm.sigma0, 2 / math.sqrt(3) * np.eye(3))
    assert prm.strict and prm.feasible


def test_recipe_semilinear():
    prm = build_params(GeneratorBounds(0.0, 3.0, 3.0, 5))
    assert prm.p == pytest.approx(1 / 3)
    assert prm.alpha_hi == pytest.approx(0.5)
    assert prm.alpha_lo == pytest.approx(0.5)


def test_recipe_boundary_case_not_strict():
    with pytest.warns(MonotonicityWarning):
        prm = build_params(GeneratorBounds(0.0, 0.5, 1.0, 12))
    assert prm.p == pytest.approx(1 / 11)
    assert not prm.strict
    assert prm.lambda_at_p == pytest.approx(2.0)


def test_overrides():
    prm = quiet_params(GeneratorBounds(0.0, 0.5, 1.0, 3), p=0.25, sigma0_scale=1.0)
    assert prm.p == 0.25
    np.testing.assert_array_equal(prm.sigma0, np.eye(3))
    with pytest.raises(ValueError):
        build_params(GeneratorBounds(0.0, 0.5, 1.0, 3), p=0.5)
    with pytest.raises(ValueError):
        GeneratorBounds(0.0, 0.0, 1.0, 3)


def test_infeasible_dominance_flagged():
    prm = quiet_params(GeneratorBounds(0.5, 1.0, 1.0, 5))
    assert not prm.feasible
    assert prm.notes


def test_coefficient_check_semilinear():
    prm = build_params(GeneratorBounds(0.0, 1.0, 1.0, 4))
    assert check_monotone_coefficient(prm, np.full(4, 0.5), 1e-4, 1.0)


def test_coefficient_check_unit_interval():
    prm = build_params(GeneratorBounds(0.0, 0.5, 1.0, 3))
    h = 0.5 / 160
    corners = np.array(np.meshgrid(*[[prm.alpha_lo, prm.alpha_hi]] * 3)).reshape(3, -1).T
    assert check_monotone_coefficient(prm, corners, h, 4.0)
    assert worst_case_monotone(prm, h, 4.0)


def test_coefficient_check_fails_for_wide_ratio():
    prm = quiet_params(GeneratorBounds(0.0, 0.1, 1.0, 12), p=1 / 3, sigma0_scale=1.0)
    alpha = np.full(12, prm.alpha_lo)
    alpha[0] = prm.alpha_hi
    assert not check_monotone_coefficient(prm, alpha, 1e-6, 0.0) or not worst_case_monotone(prm, 1e-6, 0.0)
    assert not worst_case_monotone(prm, 1e-6, 0.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12), st.floats(1.0, 1.9), st.floats(0.05, 5.0))
def test_recipe_scaling_invariants(d, lam, base):
    prm = quiet_params(GeneratorBounds(0.0, base, base * lam, d))
    assert 0.0 < prm.p <= 1 / 3
    assert prm.alpha_hi / prm.alpha_lo == pytest.approx(lam)
    target = lam / (2.0 * prm.p * (lam - 1.0) + prm.alpha_p)
    assert prm.alpha_hi == pytest.approx(target)
