#!/usr/bin/env python3
"""Re-derive every documented result and print one pass/fail table.

Covers the two worked single-agent demand examples, the market with two
distinct equilibrium price vectors, the brute-force non-existence scan for
the two-buyer market, the 200-agent fixed-point experiment, and the
budget-gap behavior of the unperturbed social program.
"""

import sys

from typedfisher.cli import REPRODUCE_NAMES, cmd_reproduce


def main() -> int:
    worst = 0
    for name in REPRODUCE_NAMES:
        print(f"--- {name} ---")
        worst = max(worst, cmd_reproduce(name))
    return worst


if __name__ == "__main__":
    sys.exit(main())
