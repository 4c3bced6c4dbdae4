"""Print where the balance gap changes sign, for a few traffic levels and radii.

Useful for seeing the two-root structure and where no root exists at all.

    python scripts/root_structure.py
"""

import warnings

import numpy as np

from chanshare import analytics as A
from chanshare.config import DEFAULTS


def brackets(cfg, mode):
    grid = np.linspace(1e-6, 1 - 1e-6, 4001)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", A.ModelWarning)
        gap = np.array([A.balance_gap(p, cfg, mode) for p in grid])
    idx = np.flatnonzero(gap[:-1] * gap[1:] < 0)
    return [float(grid[i]) for i in idx], float(gap.min()), float(gap.max())


def main():
    print(f"{'mode':10s} {'lambda':>7s} {'R':>6s} {'l2':>6s}  sign changes near / gap range")
    for mode in ("corrected", "paper"):
        for lam in (0.03, 0.1, 1.0):
            for R in (100.0, 150.0, 250.0, 400.0):
                for l2 in (10.0, 100.0, 1000.0):
                    cfg = DEFAULTS.replace(request_rate=lam, suppression_radius=R, ap_density=l2)
                    roots, lo, hi = brackets(cfg, mode)
                    where = ", ".join(f"{r:.4f}" for r in roots) or "none"
                    print(f"{mode:10s} {lam:7.2f} {R:6.0f} {l2:6.0f}  {where}"
                          f"   [{lo:+.3e}, {hi:+.3e}]")


if __name__ == "__main__":
    main()
