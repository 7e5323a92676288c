"""Tests for scenario trees, market models and the spec loader."""

import json
from pathlib import Path

import numpy as np
import pytest

from semistatic.errors import ArbitrageError, MarketSpecError, ProbabilitySumError
from semistatic.market import (
    TradingStrategy,
    binomial_market,
    combined_payoff,
    dump_market,
    load_market,
    market_to_dict,
    one_period_market,
    random_tiny_market,
    resolve_market,
    terminal_wealth,
)

DATA_DIR = Path(__file__).resolve().parent.parent / 'data'


def _spec(**overrides):
    spec = {
        'horizon': 1,
        'nodes': [
            {'id': 'r', 'parent': None, 'time': 0, 'cond_prob': 1.0, 'stock': [1.0]},
            {'id': 'u', 'parent': 'r', 'time': 1, 'cond_prob': 0.5, 'stock': [2.0]},
            {'id': 'd', 'parent': 'r', 'time': 1, 'cond_prob': 0.5, 'stock': [0.5]},
        ],
        'derivatives': [{'name': 'call', 'payoff': {'u': 1.0, 'd': 0.0}}],
    }
    spec.update(overrides)
    return spec


def test_instance_a_matrices(market):
    """Test probabilities, gains and payoffs of instance A."""
    assert market.num_states == 3
    assert market.num_stocks == 1
    assert market.num_derivatives == 1
    assert np.allclose(market.P, [1 / 3, 1 / 3, 1 / 3])
    assert np.allclose(market.G, [[1.0], [0.0], [-0.5]])
    assert np.allclose(market.F, [[1.0, 0.0, 0.0]])
    assert market.states == ['s0', 's1', 's2']


def test_equivalent_measure_is_martingale(market):
    """Test the stored equivalent martingale measure."""
    Q = market.equivalent_measure
    assert np.all(Q > 0)
    assert Q.sum() == pytest.approx(1.0, abs=1e-12)
    assert float(Q @ market.G[:, 0]) == pytest.approx(0.0, abs=1e-12)


def test_terminal_wealth(market):
    """Test wealth of a constant holding."""
    wealth = terminal_wealth(market, 1.0, TradingStrategy.constant(market, 2.0))
    assert np.allclose(wealth.values, [3.0, 1.0, 0.0])
    assert wealth.as_dict() == {'s0': 3.0, 's1': 1.0, 's2': 0.0}


def test_combined_payoff(market):
    """Test wealth after a static derivative purchase."""
    wealth = combined_payoff(market, 1.0, TradingStrategy.zero(market), [2.0], [0.1])
    assert np.allclose(wealth.values, [2.8, 0.8, 0.8])


def test_combined_payoff_dimension_mismatch(market):
    """Test that a wrong-length position is rejected."""
    with pytest.raises(ValueError):
        combined_payoff(market, 1.0, TradingStrategy.zero(market), [1.0, 2.0], [0.1])


def test_two_period_gains():
    """Test the gains matrix of a two-period binomial tree."""
    model = binomial_market(2)

    assert model.num_states == 4
    assert model.G.shape == (4, 3)
    assert np.allclose(model.P, 0.25)
    # path u-u: +1 at the root, +2 at node 'ru'
    assert np.allclose(model.G[0], [1.0, 2.0, 0.0])
    strategy = TradingStrategy.from_vector(model, [1.0, 0.0, 0.0])
    assert np.allclose(strategy.as_vector(model), [1.0, 0.0, 0.0])


def test_load_json_market():
    """Test loading a market from JSON text."""
    model = load_market(json.dumps(_spec()))

    assert model.num_states == 2
    assert model.derivatives.names == ('call',)
    assert np.allclose(model.P, [0.5, 0.5])


def test_dump_and_load_msgpack(market):
    """Test that a market survives the msgpack format."""
    restored = load_market(dump_market(market, 'msgpack'))

    assert market_to_dict(restored) == market_to_dict(market)
    assert np.allclose(restored.G, market.G)


def test_missing_horizon():
    """Test the field-level error for a missing horizon."""
    spec = _spec()
    del spec['horizon']
    with pytest.raises(MarketSpecError) as excinfo:
        load_market(json.dumps(spec))
    assert excinfo.value.field == 'horizon'


def test_probability_sum_error():
    """Test that branch probabilities must sum to one."""
    spec = _spec()
    spec['nodes'][2]['cond_prob'] = 0.4
    with pytest.raises(ProbabilitySumError):
        load_market(json.dumps(spec))


def test_unknown_parent():
    """Test that a dangling parent is rejected."""
    spec = _spec()
    spec['nodes'][2]['parent'] = 'nowhere'
    with pytest.raises(MarketSpecError):
        load_market(json.dumps(spec))


def test_payoff_must_cover_terminal_nodes():
    """Test that payoffs are defined on every terminal node."""
    spec = _spec(derivatives=[{'name': 'bad', 'payoff': {'u': 1.0}}])
    with pytest.raises(MarketSpecError):
        load_market(json.dumps(spec))


def test_invalid_json():
    """Test that malformed JSON is a spec error."""
    with pytest.raises(MarketSpecError):
        load_market('{"horizon": ')


def test_arbitrage_market():
    """Test that a market with an arbitrage is rejected."""
    with pytest.raises(ArbitrageError):
        one_period_market([2.0, 1.5], [0.5, 0.5])


def test_resolve_builtin_and_missing():
    """Test built-in market names and unknown sources."""
    assert resolve_market('s10').name == 's10'
    assert resolve_market('instance-a').num_states == 3
    with pytest.raises(MarketSpecError):
        resolve_market('no/such/market.json')


def test_random_tiny_market(rng):
    """Test that random markets are arbitrage-free with one claim."""
    for _ in range(5):
        model = random_tiny_market(rng)
        assert model.num_states == 3
        assert model.num_derivatives == 1
        assert model.P.sum() == pytest.approx(1.0, abs=1e-12)


def test_bundled_market_files(market):
    """Test that the shipped spec files load and match the built-ins."""
    model = resolve_market(str(DATA_DIR / 'instance_a.json'))
    assert np.allclose(model.P, market.P)
    assert np.allclose(model.G, market.G)
    assert np.allclose(model.F, market.F)

    two_period = resolve_market(str(DATA_DIR / 'binomial_2.json'))
    assert two_period.num_states == 4
    assert two_period.derivatives.names == ('call', 'put')
    assert np.allclose(two_period.G, binomial_market(2).G)


@pytest.mark.parametrize('model', [one_period_market([2.0, 1.0, 0.5], [1 / 3, 1 / 3, 1 / 3],
                                                     {'call': [1.0, 0.0, 0.0]}),
                                   binomial_market(3)], ids=['one_period', 'binomial_3'])
def test_terminal_wealth_martingale(model, rng):
    """Test E_Q[x0 + (H.S)_T] = x0 for random strategies."""
    Q = model.equivalent_measure
    for _ in range(20):
        H = TradingStrategy.from_vector(model, rng.normal(size=model.G.shape[1]))
        x0 = float(rng.uniform(0.5, 2.0))
        assert float(Q @ terminal_wealth(model, x0, H).values) == pytest.approx(x0, abs=1e-9)


def test_combined_payoff_linearity(market, rng):
    """Test that the payoff is linear in (x0, H, q) jointly and additive in q."""
    H = TradingStrategy.from_vector(market, rng.normal(size=1))
    q1, q2, p = rng.normal(size=1), rng.normal(size=1), [0.15]

    def payoff(x0, strategy, q):
        return combined_payoff(market, x0, strategy, q, p).values

    zero = TradingStrategy.zero(market)
    assert np.allclose(payoff(0.0, zero, q1 + q2) + payoff(0.0, zero, [0.0]),
                       payoff(0.0, zero, q1) + payoff(0.0, zero, q2))
    scaled = TradingStrategy.from_vector(market, 3.0 * H.as_vector(market))
    assert np.allclose(payoff(3.0, scaled, 3.0 * q1), 3.0 * payoff(1.0, H, q1))
