"""Maximise the bounding function over overlaps and energies, and check that
the maximum sits at r = 0 with value twice the first-moment exponent.

    python3 demos/second_moment.py
"""
from pspin_saddles import ModelParams, optimize_psi, sigma_ell, threshold_E_ell, threshold_E_inf

for p in (3, 4):
    for ell in (0, 1, 2):
        prm = ModelParams(p, ell)
        lo, hi = -threshold_E_ell(prm), -threshold_E_inf(p)
        u_star = lo + 0.5 * (hi - lo)
        (r, u1, u2), val = optimize_psi(prm, (-0.95, 0.95), (lo + 1e-3, u_star))
        print(f"p={p} ell={ell} u*={u_star:.4f}  argmax r={r:+.2e} u=({u1:.4f}, {u2:.4f})  "
              f"max={val:.8f}  2*Sigma={2 * sigma_ell(prm, u_star):.8f}")
