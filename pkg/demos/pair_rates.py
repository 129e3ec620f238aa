"""Pair rate J_r(x, y) on a small grid, and the same value from the
two-time Dyson path contraction.

    python3 demos/pair_rates.py [p] [r]
"""
import sys

import numpy as np

from pspin_saddles import pair_rate
from pspin_saddles.dyson import pair_rate_via_paths

p = int(sys.argv[1]) if len(sys.argv) > 1 else 3
r = float(sys.argv[2]) if len(sys.argv) > 2 else 0.5
xs = np.linspace(2.1, 3.3, 5)
print(f"J_r(x, y) for p={p}, r={r}, ell=1 (rows x, columns y)")
print(" " * 6 + "".join(f"{y:>10.2f}" for y in xs))
for x in xs:
    print(f"{x:6.2f}" + "".join(f"{pair_rate(p, r, 1, x, y).value:10.5f}" for y in xs))
worst = max(abs(pair_rate(p, r, 1, x, y).value - pair_rate_via_paths(p, r, 1, x, y))
            for x in xs for y in xs)
print(f"max difference to the path contraction: {worst:.2e}")
