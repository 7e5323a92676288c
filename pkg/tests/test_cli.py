"""Tests for the command-line interface."""

import csv
import json
from pathlib import Path

import pytest

from semistatic import cli
from semistatic.cli import (
    EXIT_ARBITRAGE,
    EXIT_INPUT,
    EXIT_OK,
    EXIT_SOLVER,
    EXIT_VERIFICATION,
    exit_code_for,
    run,
)
from semistatic.errors import SolverError, VerificationFailure
from semistatic.market import dump_market, instance_a
from semistatic.verify import VerificationReport

DATA = Path(__file__).resolve().parent.parent / 'data'
BINOMIAL_PRICE = '0.3333333333333333,0.3333333333333333'


def _read_csv(path):
    with open(path, newline='') as f:
        return list(csv.reader(f))


def _market_file(tmp_path, spec, name='market.json'):
    path = tmp_path / name
    path.write_text(json.dumps(spec))
    return str(path)


def _one_period(up_prob=0.5, up=2.0):
    return {
        'horizon': 1,
        'nodes': [
            {'id': 'r', 'parent': None, 'time': 0, 'cond_prob': 1.0, 'stock': [1.0]},
            {'id': 'u', 'parent': 'r', 'time': 1, 'cond_prob': up_prob, 'stock': [up]},
            {'id': 'd', 'parent': 'r', 'time': 1, 'cond_prob': 0.5, 'stock': [0.5]},
        ],
        'derivatives': [{'name': 'call', 'payoff': {'u': 1.0, 'd': 0.0}}],
    }


def test_exit_code_mapping():
    """Test the exception to exit code table."""
    assert exit_code_for(SolverError("x")) == EXIT_SOLVER
    assert exit_code_for(VerificationFailure("x")) == EXIT_VERIFICATION
    assert exit_code_for(ValueError("x")) == EXIT_INPUT
    assert exit_code_for(KeyError("x")) == EXIT_SOLVER


def test_repro_s10(tmp_path, capsys):
    """Test the counterexample command end to end."""
    out = tmp_path / 'checks.csv'
    assert run(['repro-s10', '--output', str(out)]) == EXIT_OK

    rows = _read_csv(out)
    assert rows[0] == VerificationReport.CSV_HEADER
    assert 'PASS' in capsys.readouterr().out


def test_solve(tmp_path, capsys):
    """Test solving instance A and the CSV row."""
    out = tmp_path / 'solve.csv'
    assert run(['solve', '--p', '0.15', '--output', str(out)]) == EXIT_OK

    rows = _read_csv(out)
    assert rows[0] == ['p', 'u_tilde', 'q_tilde_1', 'dx_u', 'm']
    assert float(rows[1][0]) == pytest.approx(0.15)
    assert 'u~(x=1, p=' in capsys.readouterr().out


def test_solve_fixed_position(capsys):
    """Test u(x, q) through the solve command."""
    assert run(['solve', '--q', '0']) == EXIT_OK
    assert 'u(x=1' in capsys.readouterr().out


def test_solve_arbitrage_price(capsys):
    """Test that a price outside the arbitrage-free set exits with code 3."""
    assert run(['solve', '--p', '0.5']) == EXIT_ARBITRAGE
    assert 'error:' in capsys.readouterr().err


def test_solve_needs_price():
    """Test that a market with derivatives requires --p."""
    assert run(['solve']) == EXIT_INPUT


def test_dual_commands(tmp_path, capsys):
    """Test the three dual forms."""
    assert run(['dual', '--r', '0.2222222222222222']) == EXIT_OK
    assert run(['dual', '--p', '0.2222222222222222']) == EXIT_OK
    out = tmp_path / 'w.csv'
    assert run(['dual', '--output', str(out)]) == EXIT_OK

    rows = _read_csv(out)
    assert rows[0] == ['y', 'w_tilde', 'p_star_1']
    assert float(rows[1][2]) == pytest.approx(2 / 9, abs=1e-8)
    assert 'w~(y=1)' in capsys.readouterr().out


def test_geometry(tmp_path, capsys):
    """Test price bounds, m and the cone radius in the geometry table."""
    out = tmp_path / 'geometry.csv'
    code = run(['geometry', '--p', '0.16666666666666666', '--w', '1,0.16666666666666666',
                '--output', str(out)])
    assert code == EXIT_OK

    table = dict(_read_csv(out)[1:])
    assert float(table['price_lower_1']) == pytest.approx(0.0, abs=1e-9)
    assert float(table['price_upper_1']) == pytest.approx(1 / 3, abs=1e-9)
    assert float(table['superreplication_1']) == pytest.approx(1 / 3, abs=1e-9)
    assert table['nonreplicable'] == 'true'
    assert float(table['m']) == pytest.approx(6.0, abs=1e-6)
    assert float(table['d']) == pytest.approx(40 ** 0.5, abs=1e-6)
    assert 'm(x=1, p=' in capsys.readouterr().out


def test_missing_market_file():
    """Test that a missing market file is an input error."""
    assert run(['geometry', '--market', 'no/such/market.json']) == EXIT_INPUT


def test_bad_probabilities_file(tmp_path):
    """Test that probabilities not summing to one are an input error."""
    path = _market_file(tmp_path, _one_period(up_prob=0.4))
    assert run(['geometry', '--market', path]) == EXIT_INPUT


def test_arbitrage_market_file(tmp_path):
    """Test that a market with an arbitrage exits with code 3."""
    spec = _one_period()
    spec['nodes'][2]['stock'] = [1.5]
    path = _market_file(tmp_path, spec)
    assert run(['geometry', '--market', path]) == EXIT_ARBITRAGE


def test_msgpack_market_file(tmp_path):
    """Test loading a market stored as msgpack."""
    path = tmp_path / 'market.msgpack'
    path.write_bytes(dump_market(instance_a(), 'msgpack'))
    assert run(['geometry', '--market', str(path)]) == EXIT_OK


@pytest.mark.parametrize('argv', [
    [],
    ['bogus'],
    ['solve', '--p', 'abc'],
    ['sweep', '--grid', '0.1,0.2'],
    ['solve', '--p', '0.1', '--tol', 'no_such_field=1'],
    ['solve', '--p', '0.1', '--utility', 'power:abc'],
])
def test_invalid_arguments(argv):
    """Test that malformed command lines exit with code 2."""
    assert run(argv) == EXIT_INPUT


def test_help():
    """Test that --help exits cleanly."""
    assert run(['--help']) == EXIT_OK


def test_sweep_reproducible(tmp_path):
    """Test that two sweeps write byte-identical CSV files."""
    first, second = tmp_path / 'a.csv', tmp_path / 'b.csv'
    argv = ['sweep', '--grid', '0.02,0.3,15', '--tol', 'threads=2']
    assert run(argv + ['--output', str(first)]) == EXIT_OK
    assert run(argv + ['--output', str(second)]) == EXIT_OK

    assert first.read_bytes() == second.read_bytes()
    rows = _read_csv(first)
    assert rows[0] == ['p', 'u_tilde', 'q_tilde_1', 'dx_u', 'm']
    assert len(rows) == 16


def test_verify_archive(tmp_path):
    """Test the verify command and its msgpack archive."""
    archive = tmp_path / 'report.msgpack'
    assert run(['verify', '--p', '0.15', '--archive', str(archive)]) == EXIT_OK

    report = VerificationReport.from_bytes(archive.read_bytes())
    assert report.passed
    assert any(check.name.startswith('[0.15]') for check in report.checks)


def test_unexpected_error_exit_code(monkeypatch, capsys):
    """Test that an exception outside the taxonomy exits as a solver failure."""
    def boom(args, model, config):
        raise KeyError('missing')

    monkeypatch.setitem(cli.COMMANDS, 'geometry', boom)
    assert run(['geometry']) == EXIT_SOLVER
    assert 'missing' in capsys.readouterr().err


def test_solve_replicable_market(capsys):
    """Test solve on the complete two-period binomial market."""
    market = str(DATA / 'binomial_2.json')
    assert run(['solve', '--market', market, '--p', BINOMIAL_PRICE]) == EXIT_OK

    out = capsys.readouterr().out
    assert 'minimum norm' in out
    assert 'm = inf' in out


def test_verify_replicable_market(tmp_path):
    """Test verify on the binomial market, skipping the checks built on m."""
    archive = tmp_path / 'report.msgpack'
    market = str(DATA / 'binomial_2.json')
    assert run(['verify', '--market', market, '--p', BINOMIAL_PRICE, '--archive', str(archive)]) == EXIT_OK

    report = VerificationReport.from_bytes(archive.read_bytes())
    assert report.passed
    assert report['position.midpoint_convexity'].skipped


def test_verify_kinked_utility(tmp_path):
    """Test verify on the stock-free market with the kinked utility."""
    archive = tmp_path / 'report.msgpack'
    assert run(['verify', '--market', 's10', '--utility', 's10', '--x', '2',
                '--archive', str(archive)]) == EXIT_OK

    report = VerificationReport.from_bytes(archive.read_bytes())
    assert report['divergence.trend'].skipped
