"""Command-line entry point for SemiStatic."""

import argparse
import csv
import io
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .config import Config
from .dual import dual_w_tilde, solve_v, solve_v_tilde
from .errors import (
    ArbitrageError,
    ArbitragePriceError,
    DimensionTooLargeError,
    MarketSpecError,
    NumericalFailureError,
    SolverError,
    UnboundedPolytopeError,
    VerificationFailure,
)
from .geometry import (
    check_nonreplicability,
    cone_radius,
    largest_feasible_position,
    price_set,
    superreplication_price,
)
from .market import MarketModel, resolve_market
from .primal import solve_u, solve_u_tilde
from .utility import parse_utility
from .utils import format_float, format_vector, serialize, setup_logging
from .verify import (
    SweepReport,
    VerificationReport,
    first_order_check,
    full_suite,
    linear_grid,
    nonconvexity_counterexample,
    sweep_1d,
)


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ARBITRAGE = 3
EXIT_SOLVER = 4
EXIT_VERIFICATION = 5


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the documented exit code."""
    if isinstance(error, (ArbitrageError, ArbitragePriceError)):
        return EXIT_ARBITRAGE
    if isinstance(error, VerificationFailure):
        return EXIT_VERIFICATION
    if isinstance(error, (SolverError, NumericalFailureError, UnboundedPolytopeError,
                          DimensionTooLargeError, np.linalg.LinAlgError)):
        return EXIT_SOLVER
    if isinstance(error, (MarketSpecError, ValueError, OSError)):
        return EXIT_INPUT
    logger.error("Unexpected %s: %s", type(error).__name__, error)
    return EXIT_SOLVER


def _vector(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _grid(text: str):
    parts = text.split(',')
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"grid must be min,max,count, got {text!r}")
    try:
        return float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be min,max,count, got {text!r}")


def _override(text: str):
    name, sep, value = text.partition('=')
    if not sep or not name:
        raise argparse.ArgumentTypeError(f"expected name=value, got {text!r}")
    return name.strip(), value.strip()


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--market", default="instance-a",
                        help="Market spec file (JSON or msgpack) or built-in name (instance-a, s10).")
    common.add_argument("--utility", default="log",
                        help="log, power:<alpha>, pwl:<file> or s10 (default: log).")
    common.add_argument("--x", type=float, default=1.0, help="Initial wealth (default: 1).")
    common.add_argument("--tol", type=_override, action="append", default=[], metavar="NAME=VALUE",
                        help="Override a configuration field; may be repeated.")
    common.add_argument("--output", help="Write a CSV table to this path.")
    common.add_argument("--archive", help="Write the full report as msgpack to this path.")
    common.add_argument("--verbose", action="store_true", help="Enable debug logging.")

    parser = argparse.ArgumentParser(
        prog="semistatic",
        description="Utility maximization with dynamically traded stocks and statically held derivatives."
    )
    commands = parser.add_subparsers(dest="command", required=True)

    solve = commands.add_parser("solve", parents=[common], help="Solve the semi-static primal problem.")
    solve.add_argument("--p", type=_vector, help="Derivative prices, comma-separated.")
    solve.add_argument("--q", type=_vector, help="Solve u(x, q) for a fixed position instead.")

    dual = commands.add_parser("dual", parents=[common], help="Solve a dual problem.")
    dual.add_argument("--y", type=float, default=1.0, help="Dual variable y (default: 1).")
    dual.add_argument("--p", type=_vector, help="Derivative prices: solve v~(y, p).")
    dual.add_argument("--r", type=_vector, help="Moment vector: solve v(y, r).")

    geometry = commands.add_parser("geometry", parents=[common],
                                   help="Arbitrage-free prices, cones and position bounds.")
    geometry.add_argument("--p", type=_vector, help="Price for the largest feasible position.")
    geometry.add_argument("--w", type=_vector, help="Normal vector for the cone radius.")

    sweep = commands.add_parser("sweep", parents=[common], help="Sweep the value over a price grid.")
    sweep.add_argument("--grid", type=_grid, help="min,max,count (default: 41 points inside the price set).")

    verify = commands.add_parser("verify", parents=[common], help="Run every applicable check.")
    verify.add_argument("--p", type=_vector, action="append", default=[],
                        help="Price to check at; may be repeated (default: three interior prices).")

    commands.add_parser("repro-s10", parents=[common],
                        help="Reproduce the non-convex value function counterexample.")
    return parser


def _config(args: argparse.Namespace) -> Config:
    return Config.from_env().with_overrides(dict(args.tol))


def _write_csv(path: Optional[str], header: Sequence[str], rows: Sequence[Sequence[str]]):
    if not path:
        return
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    writer.writerows(rows)
    Path(path).write_text(buffer.getvalue(), encoding='utf-8')


def _write_archive(path: Optional[str], payload: Dict[str, Any]):
    if path:
        Path(path).write_bytes(serialize(payload))


def _finish(report: VerificationReport) -> int:
    print(report.summary())
    if not report.passed:
        raise VerificationFailure(f"{len(report.failures())} check(s) failed")
    return EXIT_OK


def _cmd_solve(args: argparse.Namespace, model: MarketModel, config: Config) -> int:
    utility = parse_utility(args.utility)
    if args.q is not None:
        solution = solve_u(model, utility, args.x, args.q, config)
        print(f"u(x={args.x:g}, q={format_vector(args.q)}) = {format_float(solution.value)} "
              f"[{solution.status.value}]")
        if solution.wealth is not None:
            for state, value in solution.wealth.as_dict().items():
                print(f"  wealth[{state}] = {format_float(value)}")
        _write_archive(args.archive, {'value': solution.value, 'status': solution.status.value,
                                      'position': solution.position})
        return EXIT_OK

    p = args.p if args.p is not None else []
    if model.num_derivatives and args.p is None:
        raise ValueError("solve needs --p when the market has derivatives")
    solution = solve_u_tilde(model, utility, args.x, p, config)
    m = largest_feasible_position(model, args.x, p, config)[0] if model.num_derivatives else 0.0
    print(f"u~(x={args.x:g}, p={format_vector(p)}) = {format_float(solution.value)} [{solution.status.value}]")
    print(f"  position q~ = {format_vector(solution.position)}"
          + ("" if solution.unique else " (minimum norm; optimum not unique)"))
    print(f"  dx u~ = {format_float(solution.marginal)}")
    print(f"  m = {format_float(m)}")
    if solution.wealth is not None:
        for state, value in solution.wealth.as_dict().items():
            print(f"  wealth[{state}] = {format_float(value)}")

    header = ['p', 'u_tilde'] + [f'q_tilde_{j + 1}' for j in range(model.num_derivatives)] + ['dx_u', 'm']
    row = (format_vector(p) + [format_float(solution.value)] + format_vector(solution.position)
           + [format_float(solution.marginal), format_float(m)])
    _write_csv(args.output, header, [row])

    report = first_order_check(model, utility, args.x, p, config)
    _write_archive(args.archive, {'value': solution.value, 'status': solution.status.value,
                                  'position': solution.position, 'marginal': solution.marginal,
                                  'checks': report.to_dict()})
    return _finish(report)


def _cmd_dual(args: argparse.Namespace, model: MarketModel, config: Config) -> int:
    utility = parse_utility(args.utility)
    if args.p is not None:
        solution = solve_v_tilde(model, utility, args.y, args.p, config)
        label = f"v~(y={args.y:g}, p={format_vector(args.p)})"
    elif args.r is not None:
        solution = solve_v(model, utility, args.y, args.r, config)
        label = f"v(y={args.y:g}, r={format_vector(args.r)})"
    else:
        value, price = dual_w_tilde(model, utility, args.y, config)
        print(f"w~(y={args.y:g}) = {format_float(value)}")
        print(f"  minimizing price p* = {format_vector(price)}")
        _write_csv(args.output, ['y', 'w_tilde'] + [f'p_star_{j + 1}' for j in range(len(price))],
                   [[format_float(args.y), format_float(value)] + format_vector(price)])
        _write_archive(args.archive, {'value': value, 'price': price})
        return EXIT_OK

    print(f"{label} = {format_float(solution.value)} [{solution.status.value}]")
    if solution.optimal:
        print(f"  gradient = {format_vector(solution.gradient)}")
        print(f"  density = {format_vector(solution.density)}")
        _write_csv(args.output, ['state', 'density'],
                   [[state, format_float(h)] for state, h in zip(model.states, solution.density)])
    _write_archive(args.archive, {'value': solution.value, 'status': solution.status.value,
                                  'gradient': solution.gradient})
    return EXIT_OK


def _cmd_geometry(args: argparse.Namespace, model: MarketModel, config: Config) -> int:
    prices = price_set(model, config)
    rows: List[List[str]] = []
    print(f"market {model.name or args.market}: {model.num_states} states, "
          f"{model.num_stocks} stocks, {model.num_derivatives} derivatives")
    if model.num_derivatives:
        bounds = prices.bounds()
        for j, (lo, hi) in enumerate(bounds):
            name = model.derivatives.names[j]
            print(f"  price range of {name}: [{format_float(lo)}, {format_float(hi)}]")
            rows.append([f'price_lower_{j + 1}', format_float(lo)])
            rows.append([f'price_upper_{j + 1}', format_float(hi)])
            sup = superreplication_price(model, model.F[j], config)
            rows.append([f'superreplication_{j + 1}', format_float(sup)])
        for vertex in prices.vertices:
            print(f"  vertex price {format_vector(vertex)}")
        nonrep = check_nonreplicability(model, config)
        print(f"  nonreplicable: {bool(nonrep)}"
              + ("" if nonrep else f" (replicable combination {format_vector(nonrep.direction)})"))
        rows.append(['nonreplicable', str(bool(nonrep)).lower()])
    if args.p is not None:
        m, q = largest_feasible_position(model, args.x, args.p, config)
        print(f"  m(x={args.x:g}, p={format_vector(args.p)}) = {format_float(m)} at q = {format_vector(q)}")
        rows.append(['m', format_float(m)])
    if args.w is not None:
        d, v = cone_radius(model, args.w, config)
        print(f"  d(w={format_vector(args.w)}) = {format_float(d)} at v = {format_vector(v)}")
        rows.append(['d', format_float(d)])
    _write_csv(args.output, ['quantity', 'value'], rows)
    _write_archive(args.archive, {'rows': rows})
    return EXIT_OK


def _default_grid(model: MarketModel, config: Config, count: int = 41) -> List[float]:
    lower, upper = price_set(model, config).interval()
    margin = 0.03 * (upper - lower)
    return linear_grid(lower + margin, upper - margin, count)


def _cmd_sweep(args: argparse.Namespace, model: MarketModel, config: Config) -> int:
    utility = parse_utility(args.utility)
    grid = linear_grid(*args.grid) if args.grid else _default_grid(model, config)
    report: SweepReport = sweep_1d(model, utility, args.x, grid, config)
    _write_csv(args.output, report.header, report.csv_rows())
    _write_archive(args.archive, {'header': report.header, 'rows': report.csv_rows(),
                                  'flat': list(report.flat), 'shape': list(report.shape)})
    print(f"sweep over {len(grid)} prices in [{format_float(grid[0])}, {format_float(grid[-1])}]")
    print(f"  shape: {' / '.join(report.shape)}")
    print(f"  zero-position interval: [{format_float(report.flat[0])}, {format_float(report.flat[1])}]")
    if report.divergence:
        print(f"  m above threshold at {len(report.divergence)} price(s)")
    return _finish(report.check())


def _cmd_verify(args: argparse.Namespace, model: MarketModel, config: Config) -> int:
    utility = parse_utility(args.utility)
    prices = args.p
    if not prices:
        if model.num_derivatives == 1:
            lower, upper = price_set(model, config).interval()
            prices = [[lower + f * (upper - lower)] for f in (0.25, 0.5, 0.75)]
        else:
            rng = np.random.default_rng(config.random_seed)
            prices = price_set(model, config).sample(rng, 3).tolist()
    report = full_suite(model, utility, args.x, prices, config)
    _write_csv(args.output, VerificationReport.CSV_HEADER, report.csv_rows())
    if args.archive:
        Path(args.archive).write_bytes(report.to_bytes())
    return _finish(report)


def _cmd_repro_s10(args: argparse.Namespace, model: Optional[MarketModel], config: Config) -> int:
    report = nonconvexity_counterexample(config=config)
    _write_csv(args.output, VerificationReport.CSV_HEADER, report.csv_rows())
    if args.archive:
        Path(args.archive).write_bytes(report.to_bytes())
    return _finish(report)


COMMANDS = {
    'solve': _cmd_solve,
    'dual': _cmd_dual,
    'geometry': _cmd_geometry,
    'sweep': _cmd_sweep,
    'verify': _cmd_verify,
    'repro-s10': _cmd_repro_s10,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, dispatch the command and return the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_INPUT

    setup_logging(logging.DEBUG if args.verbose else logging.WARNING)
    try:
        config = _config(args)
        model = None if args.command == 'repro-s10' else resolve_market(args.market)
        return COMMANDS[args.command](args, model, config)
    except Exception as e:
        code = exit_code_for(e)
        logger.debug("Command %s failed", args.command, exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return code


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
