import numpy as np
import pytest

from specsurg.problems import (
    family_exponential,
    family_inverse_square,
    validate_boundary,
    zero_potential,
)
from specsurg.waves import ode_residual, solve_growing, solve_jost, solve_regular


def _exp_jost_closed(k, x):
    # closed form for the rapidly decaying scalar family with
    # alpha=2, eps=1, beta=1/3
    return np.exp(1j * k * x) * (1 - 4j / ((3 * k + 1j) * (2 + np.exp(2 * x / 3))))


def _invsq_jost_closed(k, x):
    # closed form for the 1/(x+1)^2 scalar family
    return np.exp(1j * k * x) * (1 + 1j / (k * (1 + x)))


def test_free_jost_is_plane_wave():
    sol = solve_jost(zero_potential(1), 1.3)
    for x in (0.0, 2.5, 7.0):
        assert abs(sol.value_at(x)[0, 0] - np.exp(1.3j * x)) < 1e-10
        assert abs(sol.deriv_at(x)[0, 0] - 1.3j * np.exp(1.3j * x)) < 1e-10


@pytest.mark.parametrize("k", [0.7, 1.0, 2.4, -1.1])
def test_exponential_family_jost_matches_closed_form(k):
    sol = solve_jost(family_exponential(2, 1, 1 / 3), k, rtol=1e-11)
    for x in (0.0, 1.0, 3.0):
        assert abs(sol.value_at(x)[0, 0] - _exp_jost_closed(k, x)) < 1e-8


@pytest.mark.parametrize("k", [0.5, 1.6])
def test_inverse_square_jost_matches_closed_form(k):
    # truncation error scales with the slowly decaying tail, so push the
    # matching point far out
    sol = solve_jost(family_inverse_square(1.0), k, rtol=1e-11, x_inf=1000.0)
    for x in (0.0, 2.0, 5.0):
        assert abs(sol.value_at(x)[0, 0] - _invsq_jost_closed(k, x)) < 1e-7


def test_jost_derivative_consistent_with_finite_difference():
    sol = solve_jost(family_exponential(1, 1, 1), 0.9, rtol=1e-11)
    h = 1e-5
    x = 1.4
    fd = (sol.value_at(x + h) - sol.value_at(x - h)) / (2 * h)
    assert np.max(np.abs(fd - sol.deriv_at(x))) < 1e-7


def test_regular_solution_initial_conditions():
    A = np.array([[1.0, 2.0], [0.0, 3.0]])
    B = np.array([[4.0, 20.0], [4.0, -2.0]])
    validate_boundary(A, B)
    pot = zero_potential(2)
    sol = solve_regular(pot, A, B, 1.2)
    v0, d0 = sol.pair_at(0.0)
    assert np.max(np.abs(v0 - A)) < 1e-12
    assert np.max(np.abs(d0 - B)) < 1e-12


def test_regular_solution_satisfies_ode():
    pot = family_exponential(1, 2, 1)
    sol = solve_regular(pot, np.eye(1), -np.eye(1), 1.5)
    res = ode_residual(pot, 1.5, lambda x: sol.pair_at(x)[0], 2.0)
    assert res < 1e-6


def test_growing_solution_blows_up_at_imaginary_wavenumber():
    sol = solve_growing(zero_potential(1), 1.0j)
    assert abs(sol.value_at(5.0)[0, 0]) > 10.0


def test_ode_residual_flags_wrong_solution():
    pot = family_exponential(1, 1, 1)
    res = ode_residual(pot, 1.0, lambda x: np.array([[np.exp(1j * x)]]), 1.0)
    assert res > 1e-3
