#!/usr/bin/env python3
"""
Example usage of SemiStatic.
Walks through instance A: price bounds, optimal trading across prices,
the dual problem and the non-convexity example.
"""

import sys

from semistatic import (
    LogUtility,
    dual_w_tilde,
    instance_a,
    largest_feasible_position,
    nonconvexity_counterexample,
    price_set,
    solve_u_tilde,
    superreplication_price,
)
from semistatic.errors import SemiStaticError


def main():
    print("=" * 60)
    print("SemiStatic - semi-static utility maximization")
    print("=" * 60)

    market = instance_a()
    utility = LogUtility()

    try:
        lower, upper = price_set(market).interval()
        print(f"\n[GEOMETRY] arbitrage-free call prices: ({lower:.6f}, {upper:.6f})")
        print(f"[GEOMETRY] superreplication price: {superreplication_price(market, market.F[0]):.6f}")

        _, p_star = dual_w_tilde(market, utility, 1.0)
        print(f"\n[DUAL] agent with x=1 does not trade at p* = {p_star[0]:.6f}")

        print("\n[PRIMAL]   p        u~(1,p)     q~         m")
        for p in (0.05, 0.1, 0.15, p_star[0], 0.25, 0.3, 0.33):
            solution = solve_u_tilde(market, utility, 1.0, [p])
            m, _ = largest_feasible_position(market, 1.0, [p])
            print(f"         {p:.4f}  {solution.value:10.6f}  {solution.position[0]:9.4f}  {m:9.2f}")

        print("\n[CHECK] non-convex value function example")
        report = nonconvexity_counterexample()
        print(report.summary())
    except SemiStaticError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
