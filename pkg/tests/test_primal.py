"""Tests for the primal utility maximisation problems."""

import math

import numpy as np
import pytest

from semistatic.errors import ArbitragePriceError, DomainError
from semistatic.market import binomial_market
from semistatic.primal import (
    SolveStatus,
    marginal_utility_price,
    solve_static_decomposition,
    solve_u,
    solve_u_tilde,
    stock_only_value,
    utility_gradient,
)
from semistatic.utility import PowerUtility

LOG_VALUE = math.log(9 / 8) / 3


def test_solve_u_log(market, log_utility):
    """Test u(1, 0) against the closed form."""
    solution = solve_u(market, log_utility, 1.0, [0.0])

    assert solution.status is SolveStatus.INTERIOR
    assert solution.value == pytest.approx(LOG_VALUE, abs=1e-10)
    assert np.allclose(solution.wealth.values, [1.5, 1.0, 0.75], atol=1e-8)
    assert solution.strategy.holdings['root'][0] == pytest.approx(0.5, abs=1e-8)
    assert np.allclose(solution.density, [2 / 3, 1.0, 4 / 3], atol=1e-8)
    assert solution.marginal == pytest.approx(1.0, abs=1e-8)


def test_stock_only_value(market, log_utility):
    """Test that w(x) ignores derivatives."""
    assert stock_only_value(market, log_utility, 1.0).value == pytest.approx(LOG_VALUE, abs=1e-10)


def test_solve_u_boundary(market, log_utility):
    """Test an endowment on the boundary of the feasible cone."""
    solution = solve_u(market, log_utility, 1.0, [-3.0])

    assert solution.status is SolveStatus.BOUNDARY
    assert solution.value == -math.inf


def test_solve_u_infeasible(market, log_utility):
    """Test an endowment outside the feasible cone."""
    solution = solve_u(market, log_utility, 1.0, [-4.0])

    assert solution.status is SolveStatus.INFEASIBLE
    assert solution.value == -math.inf
    assert not solution.feasible


def test_solve_u_power_boundary(market, sqrt_utility):
    """Test that a finite U(0) gives a finite boundary value."""
    solution = solve_u(market, sqrt_utility, 1.0, [-3.0])

    assert solution.status is SolveStatus.BOUNDARY
    assert math.isfinite(solution.value)
    # only the middle state keeps wealth, and it holds exactly 1
    assert solution.value == pytest.approx(2.0 / 3.0, abs=1e-8)


def test_utility_gradient(market, log_utility):
    """Test the gradient of u and the marginal price at (1, 0)."""
    y, r = utility_gradient(market, log_utility, 1.0, [0.0])

    assert y == pytest.approx(1.0, abs=1e-8)
    assert r[0] == pytest.approx(2 / 9, abs=1e-8)
    assert marginal_utility_price(market, log_utility, 1.0, [0.0])[0] == pytest.approx(2 / 9, abs=1e-8)


def test_no_trade_at_marginal_price(market, log_utility):
    """Test that the optimal position vanishes at the marginal price."""
    solution = solve_u_tilde(market, log_utility, 1.0, [2 / 9])

    assert abs(solution.position[0]) <= 1e-6
    assert solution.value == pytest.approx(LOG_VALUE, abs=1e-10)
    assert solution.unique


def test_position_sign(market, log_utility):
    """Test buying below and selling above the marginal price."""
    assert solve_u_tilde(market, log_utility, 1.0, [0.1]).position[0] > 0
    assert solve_u_tilde(market, log_utility, 1.0, [0.3]).position[0] < 0


def test_value_at_least_stock_only(market, log_utility):
    """Test that access to the claim never lowers the value."""
    base = stock_only_value(market, log_utility, 1.0).value
    for p in (0.05, 1 / 6, 0.3):
        assert solve_u_tilde(market, log_utility, 1.0, [p]).value >= base - 1e-12


def test_solve_u_tilde_rejects_bad_input(market, log_utility):
    """Test price and wealth validation."""
    with pytest.raises(ArbitragePriceError):
        solve_u_tilde(market, log_utility, 1.0, [0.5])
    with pytest.raises(ArbitragePriceError):
        solve_u_tilde(market, log_utility, 1.0, [0.0])
    with pytest.raises(DomainError):
        solve_u_tilde(market, log_utility, 0.0, [0.1])


def test_non_unique_position(market, basket_market, log_utility):
    """Test the minimum-norm position when claims are collinear."""
    solution = solve_u_tilde(basket_market, log_utility, 1.0, [0.1, 0.2])
    single = solve_u_tilde(market, log_utility, 1.0, [0.1])

    assert not solution.unique
    # q1 + 2 q2 is determined; the minimum-norm split is proportional to (1, 2)
    assert solution.position[1] == pytest.approx(2 * solution.position[0], abs=1e-8)
    assert solution.value == pytest.approx(single.value, abs=1e-9)
    assert solution.position[0] + 2 * solution.position[1] == pytest.approx(single.position[0], abs=1e-6)


def test_piecewise_positive_price(s10_market, s10_utility):
    """Test the kinked example below the long/short switch."""
    solution = solve_u_tilde(s10_market, s10_utility, 2.0, [0.1])

    assert solution.value == pytest.approx((4 / 3) / 1.1, abs=1e-9)
    assert solution.position[0] == pytest.approx(1 / 1.1, abs=1e-9)
    assert np.allclose(solution.density, [1.0, 1.8 / 1.1], atol=1e-6)


def test_piecewise_negative_price(s10_market, s10_utility):
    """Test the kinked example at a negative price."""
    solution = solve_u_tilde(s10_market, s10_utility, 2.0, [-0.1])

    assert solution.value == pytest.approx(4 / 3 + (1 / 3) * (0.2 / 1.1), abs=1e-9)
    assert solution.position[0] == pytest.approx(1 / 1.1, abs=1e-9)


def test_piecewise_zero_price(s10_market, s10_utility):
    """Test the kinked example at price zero."""
    assert solve_u_tilde(s10_market, s10_utility, 2.0, [0.0]).value == pytest.approx(4 / 3, abs=1e-9)


def test_static_decomposition(market, log_utility):
    """Test the outer search over static positions."""
    joint = solve_u_tilde(market, log_utility, 1.0, [0.15])
    static = solve_static_decomposition(market, log_utility, 1.0, [0.15])

    assert static.value == pytest.approx(joint.value, abs=1e-8)
    assert static.position[0] == pytest.approx(joint.position[0], abs=1e-4)


@pytest.mark.parametrize('utility', ['log_utility', 'sqrt_utility'])
def test_value_concave_increasing_in_wealth(market, utility, request):
    """Test that x -> u~(x, p) is increasing and midpoint concave."""
    utility = request.getfixturevalue(utility)
    xs = np.linspace(0.5, 4.0, 8)
    values = np.array([solve_u_tilde(market, utility, x, [0.15]).value for x in xs])

    assert np.all(np.diff(values) > 0)
    for a, b in zip(xs, xs[2:]):
        mid = solve_u_tilde(market, utility, 0.5 * (a + b), [0.15]).value
        ends = 0.5 * (solve_u_tilde(market, utility, a, [0.15]).value
                      + solve_u_tilde(market, utility, b, [0.15]).value)
        assert mid >= ends - 1e-9


def test_fixed_position_below_semi_static(market, log_utility, rng):
    """Test w(x) <= u~(x, p) and u(x - q p, q) <= u~(x, p) for affordable q."""
    p = [0.15]
    best = solve_u_tilde(market, log_utility, 1.0, p).value
    assert stock_only_value(market, log_utility, 1.0).value <= best + 1e-12
    for q in rng.uniform(-2.0, 5.0, size=10):
        fixed = solve_u(market, log_utility, 1.0 - q * p[0], [q]).value
        assert fixed <= best + 1e-10


def test_complete_market_log_wealth(log_utility):
    """Test g = x dP/dQ for log utility when the claim is replicable."""
    model = binomial_market(2)
    solution = solve_u_tilde(model, log_utility, 1.5, [1 / 3])

    assert not solution.unique
    assert np.allclose(solution.wealth.values, 1.5 * model.P / model.equivalent_measure, rtol=1e-8)


def test_no_stock_market_value(s10_market, log_utility):
    """Test w(x) = U(x) when there is nothing to trade."""
    assert stock_only_value(s10_market, log_utility, 2.0).value == pytest.approx(math.log(2.0), abs=1e-12)


def test_no_derivative_market_value(log_utility):
    """Test u~(x) = w(x) without derivatives."""
    model = binomial_market(2, strike=None)
    assert solve_u_tilde(model, log_utility, 1.0, []).value == pytest.approx(
        stock_only_value(model, log_utility, 1.0).value, abs=1e-12)


def test_log_wealth_scaling(market, log_utility):
    """Test w(2) = ln 2 + w(1)."""
    one = stock_only_value(market, log_utility, 1.0).value
    two = stock_only_value(market, log_utility, 2.0).value
    assert two == pytest.approx(math.log(2.0) + one, abs=1e-10)


@pytest.mark.parametrize('alpha', [0.5, -1.0])
def test_power_value_near_price_boundary(market, alpha):
    """Test finite, non-decreasing values as p approaches sup P."""
    utility = PowerUtility(alpha)
    values = [solve_u_tilde(market, utility, 1.0, [1 / 3 - 10.0 ** (-k)]).value for k in range(1, 7)]

    assert np.all(np.isfinite(values))
    assert np.all(np.diff(values) > -1e-9)
