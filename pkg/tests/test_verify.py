"""Tests for the verification harness."""

import pytest

from semistatic.errors import DomainError
from semistatic.geometry import price_set
from semistatic.market import random_tiny_market
from semistatic.utility import LogUtility, PowerUtility
from semistatic.verify import (
    Check,
    VerificationReport,
    bipolarity_probe,
    decomposition_check,
    divergence_probe,
    dual_boundary_probe,
    duality_gap,
    first_order_check,
    full_suite,
    gradient_relation_check,
    linear_grid,
    marginal_price_set,
    nonconvexity_counterexample,
    optimizer_consistency,
    oracle_equivalence,
    position_convexity_probe,
    power_identity_check,
    radial_smoothness_check,
    stability_probe,
    sweep_1d,
)


def test_report_mechanics():
    """Test pass/fail aggregation, lookup and skipped checks."""
    report = VerificationReport('demo')
    report.add(Check.measure('a', 1e-9, 1e-6))
    report.add(Check.skip('b', 'not applicable'))
    assert report.passed
    assert 'a' in report and report['b'].skipped

    report.add(Check.measure('c', 1.0, 1e-6))
    assert not report.passed
    assert [check.name for check in report.failures()] == ['c']
    assert 'FAIL' in report.summary()
    with pytest.raises(KeyError):
        report['missing']


def test_report_serialization():
    """Test the msgpack archive and CSV rows of a report."""
    report = VerificationReport('demo', [Check.measure('a', 0.5, 1.0, 'note')])
    restored = VerificationReport.from_bytes(report.to_bytes())

    assert restored.to_dict() == report.to_dict()
    assert report.csv_rows() == [['a', '0.5', '1', 'true', 'false', 'note']]


def test_report_extend_prefix():
    """Test merging reports under a prefix."""
    merged = VerificationReport('all').extend(VerificationReport('x', [Check.measure('k', 0.0, 1.0)]), 'p ')
    assert 'p k' in merged


def test_first_order(market, log_utility):
    """Test the first-order conditions at an interior price."""
    assert first_order_check(market, log_utility, 1.0, [0.15]).passed


def test_first_order_piecewise(s10_market, s10_utility):
    """Test subdifferential membership for the kinked utility."""
    report = first_order_check(s10_market, s10_utility, 2.0, [0.1])

    assert report.passed
    assert report['first_order.marginal'].skipped
    assert not report['first_order.subdifferential'].skipped


def test_optimizer_consistency(market, log_utility):
    """Test that the primal optimizer is minus the dual gradient."""
    report = optimizer_consistency(market, log_utility, 1.0, [0.15])
    assert report.passed
    assert not report['consistency.gradient'].skipped


def test_optimizer_consistency_skips_replicable(basket_market, log_utility):
    """Test that a replicable claim combination skips the gradient check."""
    report = optimizer_consistency(basket_market, log_utility, 1.0, [0.1, 0.2])
    assert report['consistency.gradient'].skipped


def test_optimizer_consistency_piecewise(s10_market, s10_utility):
    """Test the duality certificate for the kinked utility."""
    report = optimizer_consistency(s10_market, s10_utility, 2.0, [0.1])
    assert report.passed
    assert 'consistency.fenchel_young' in report


def test_gradient_relation(market, sqrt_utility):
    """Test the price gradient against minus the marginal times q."""
    report = gradient_relation_check(market, sqrt_utility, 1.0, [0.15])
    assert report.passed
    assert not report['gradient.price'].skipped


def test_gradient_relation_skips_kinks(s10_market, s10_utility):
    """Test that non-smooth utilities skip the gradient check."""
    assert gradient_relation_check(s10_market, s10_utility, 2.0, [0.1])['gradient.price'].skipped


def test_duality_gap(market, log_utility):
    """Test strong and weak duality at an interior price."""
    assert duality_gap(market, log_utility, 1.0, [0.15]).passed


def test_decomposition(market, log_utility):
    """Test the static decomposition against the joint problem."""
    report = decomposition_check(market, log_utility, 1.0, [0.15])
    assert report.passed
    assert 'decomposition.wealth' in report


@pytest.mark.parametrize('alpha', [0.5, -1.0])
def test_power_identity(market, alpha):
    """Test the closed-form power value and homogeneity."""
    assert power_identity_check(market, alpha, 1.0, [0.15]).passed


def test_nonconvexity_counterexample():
    """Test the kinks and midpoint failure of the kinked example."""
    report = nonconvexity_counterexample()

    assert report.passed
    assert report['nonconvexity.right_slope'].residual < 1e-2
    assert 'nonconvexity.midpoint[0.001]' in report


def test_bipolarity(market):
    """Test the polar relation between wealths and densities."""
    report = bipolarity_probe(market, samples=50, seed=3)
    assert report.passed


def test_marginal_price_set(market, log_utility):
    """Test the marginal price interval of a smooth utility."""
    marginal = marginal_price_set(market, log_utility, 1.0, [0.0])
    a, b = marginal.locate()

    assert a == pytest.approx(2 / 9, abs=1e-4)
    assert b == pytest.approx(2 / 9, abs=1e-4)
    assert marginal.contains([2 / 9])
    assert not marginal.contains([0.1])
    assert not marginal.contains([0.5])


def test_marginal_price_set_piecewise(s10_market, s10_utility):
    """Test the marginal price of the kinked example."""
    marginal = marginal_price_set(s10_market, s10_utility, 2.0, [0.0])
    a, b = marginal.locate()

    assert a == pytest.approx(1 / 3, abs=1e-3)
    assert b == pytest.approx(1 / 3, abs=1e-3)
    assert not marginal.contains([0.0])


def test_marginal_price_set_infeasible_endowment(market, log_utility):
    """Test that an endowment without finite utility is rejected."""
    with pytest.raises(DomainError):
        marginal_price_set(market, log_utility, 1.0, [-3.0])


def test_sweep_shape(market, log_utility, test_config):
    """Test the sweep of instance A: decreasing, a single no-trade price, increasing."""
    report = sweep_1d(market, log_utility, 1.0, linear_grid(0.01, 0.32, 41), test_config)

    assert report.shape == ('decreasing', 'flat', 'increasing')
    assert report.flat[0] == pytest.approx(2 / 9, abs=1e-4)
    assert report.flat[1] == pytest.approx(2 / 9, abs=1e-4)
    assert report.findings == []
    assert report.header == ['p', 'u_tilde', 'q_tilde_1', 'dx_u', 'm']
    assert len(report.csv_rows()) == 41


def test_sweep_fine_grid(market, log_utility, test_config):
    """Test that a finer grid keeps the same shape."""
    report = sweep_1d(market, log_utility, 1.0, linear_grid(0.01, 0.32, 161), test_config)

    assert report.check().passed
    assert report.flat[0] == pytest.approx(2 / 9, abs=1e-3)


def test_sweep_rejects_bad_input(basket_market, market, log_utility):
    """Test sweep preconditions."""
    with pytest.raises(ValueError):
        sweep_1d(basket_market, log_utility, 1.0, [0.1])
    with pytest.raises(ValueError):
        sweep_1d(market, log_utility, 1.0, [])
    with pytest.raises(ValueError):
        linear_grid(0.0, 1.0, 1)


def test_divergence(market, log_utility):
    """Test that value, position and m grow towards the price boundary."""
    report = divergence_probe(market, log_utility, 1.0)
    assert report.passed


def test_divergence_skips_bounded_utility(market):
    """Test that utilities bounded above skip the probe."""
    report = divergence_probe(market, PowerUtility(-1.0), 1.0)
    assert report['divergence.trend'].skipped


def test_dual_boundary(market, log_utility):
    """Test steepening of v near the boundary of the moment cone."""
    assert dual_boundary_probe(market, log_utility).passed


def test_stability(market, log_utility):
    """Test that optimizers move less under smaller perturbations."""
    assert stability_probe(market, log_utility, 1.0, [0.15]).passed


def test_position_convexity(market):
    """Test midpoint convexity of m in p."""
    assert position_convexity_probe(market, samples=20, seed=5).passed


def test_oracle_on_random_markets(rng):
    """Test the solver against brute force on random tiny markets."""
    utility = LogUtility()
    for _ in range(10):
        model = random_tiny_market(rng)
        lower, upper = price_set(model).interval()
        p = [0.5 * (lower + upper)]
        assert oracle_equivalence(model, utility, 1.0, p).passed


def test_midpoint_check_is_strict():
    """Test that the midpoint check needs the midpoint strictly below the value at zero."""
    check = nonconvexity_counterexample(deltas=(1e-3,))['nonconvexity.midpoint[0.001]']

    assert check.tolerance < 0
    assert check.residual < check.tolerance
    assert check.residual == pytest.approx(-1e-3 / 3, rel=1e-3)


def test_divergence_power_utility(market, sqrt_utility):
    """Test growth towards the price boundary for the square-root utility."""
    report = divergence_probe(market, sqrt_utility, 1.0)
    assert report.passed
    assert not report['divergence.value_gain'].skipped


def test_divergence_skips_kinked_utility(s10_market, s10_utility):
    """Test that piecewise-linear utilities skip the boundary trend."""
    report = divergence_probe(s10_market, s10_utility, 2.0)
    assert report.passed
    assert report['divergence.trend'].skipped


def test_radial_smoothness_log(market, log_utility):
    """Test t -> u(t, 0) = ln t + u(1, 0) has slope 1 at t = 1."""
    report = radial_smoothness_check(market, log_utility, 1.0, [0.0])

    assert report.passed
    assert report['radial.derivative'].residual < 1e-6
    assert report['radial.one_sided'].residual < 1e-4


def test_radial_smoothness_power(market, sqrt_utility):
    """Test the radial slope of a power utility at an endowment holding the claim."""
    assert radial_smoothness_check(market, sqrt_utility, 1.0, [0.5]).passed
    assert radial_smoothness_check(market, sqrt_utility, 1.0, [-2.0]).passed


def test_radial_smoothness_skips(market, log_utility, s10_market, s10_utility):
    """Test skips for kinked utilities and endowments on the cone boundary."""
    assert radial_smoothness_check(s10_market, s10_utility, 2.0, [0.0])['radial.one_sided'].skipped
    assert radial_smoothness_check(market, log_utility, 1.0, [-3.0])['radial.one_sided'].skipped


def test_position_convexity_skips_replicable(basket_market):
    """Test that an infinite m skips the convexity check."""
    report = position_convexity_probe(basket_market, samples=5)
    assert report['position.midpoint_convexity'].skipped


def test_stability_near_boundary(market, log_utility):
    """Test that optimizers still settle under shrinking perturbations close to sup P."""
    report = stability_probe(market, log_utility, 1.0, [1 / 3 - 1e-3], radius=1e-4, levels=4)

    assert report.passed
    assert not report['stability.monotone'].skipped


def test_full_suite_kinked(s10_market, s10_utility):
    """Test the merged report for the kinked example."""
    report = full_suite(s10_market, s10_utility, 2.0, [[-0.5], [0.1], [0.5]])

    assert report.passed
    assert report['divergence.trend'].skipped
    assert report['[0.1] radial.one_sided'].skipped


def test_full_suite_runs_radial_check(market, log_utility):
    """Test that the merged report carries the radial check at each price."""
    report = full_suite(market, log_utility, 1.0, [[0.15]])

    assert report.passed
    assert not report['[0.15] radial.derivative'].skipped
