"""Print Sigma_ell(u) next to Sigma(u) between the ground state and E_inf.

    python3 demos/complexity_table.py [p]
"""
import sys

import numpy as np

from pspin_saddles import ModelParams, sigma_ell, sigma_total, threshold_E_ell, threshold_E_inf

p = int(sys.argv[1]) if len(sys.argv) > 1 else 3
e_inf = threshold_E_inf(p)
e0 = threshold_E_ell(ModelParams(p, 0))
print(f"p={p}  E_0={e0:.6f}  E_inf={e_inf:.6f}")
print(f"{'u':>9} {'Sigma':>10} " + " ".join(f"{'ell=' + str(k):>10}" for k in range(4)))
for u in np.linspace(-e0, -e_inf, 9):
    row = [sigma_ell(ModelParams(p, k), u) for k in range(4)]
    print(f"{u:9.4f} {sigma_total(p, u):10.5f} " + " ".join(f"{v:10.5f}" for v in row))
