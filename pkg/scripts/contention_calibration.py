"""Per-contender channel access rate in saturation against the retention law.

With every user requesting each slot almost every AP contends, so the
simulated access rate should track (1 - exp(-y)) / y with y = nu (1 - pi0).

    python scripts/contention_calibration.py [--slots 400] [--reps 10]
"""

import argparse
import math

import numpy as np

from chanshare import analytics as A
from chanshare import simulator as S
from chanshare.config import DEFAULTS


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--slots", type=int, default=400)
    ap.add_argument("--warmup", type=int, default=100)
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--seed", type=int, default=77)
    ap.add_argument("--densities", default="50,100,200")
    args = ap.parse_args(argv)

    print("l2/km2   nu      mu_hat   closed   z")
    for l2 in (float(v) for v in args.densities.split(",")):
        cfg = DEFAULTS.replace(request_rate=1.0, ap_density=l2, user_density=10 * l2)
        res = S.run(cfg, slots=args.slots, warmup=args.warmup, replications=args.reps,
                    seed=args.seed)
        est = [rep.estimates() for rep in res.per_replication]
        target = np.array([A.expected_mu_contention_closed(e["pi0"], cfg.nu) for e in est])
        gaps = np.array([e["mu"] for e in est]) - target
        z = gaps.mean() / (gaps.std(ddof=1) / math.sqrt(len(gaps)))
        print(f"{l2:7.0f}  {cfg.nu:6.3f}  {res.mu_hat:.5f}  {target.mean():.5f}  {z:+.2f}")


if __name__ == "__main__":
    main()
