"""Write the fig2/fig3/fig4 sweep CSVs (plus gnuplot scripts) into a directory.

    python scripts/run_figures.py out/            # analytics only
    python scripts/run_figures.py out/ --simulate --slots 4000 --reps 4
"""

import argparse
import sys
from pathlib import Path

from chanshare import cli


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("outdir", type=Path)
    ap.add_argument("--mode", choices=("paper", "corrected", "both"), default="both")
    ap.add_argument("--simulate", action="store_true")
    ap.add_argument("--slots", default="20000")
    ap.add_argument("--reps", default="10")
    ap.add_argument("--seed", default="0")
    args = ap.parse_args(argv)
    args.outdir.mkdir(parents=True, exist_ok=True)

    status = 0
    for preset in sorted(cli.PRESETS):
        csv_path = args.outdir / f"{preset}.csv"
        argv = ["sweep", "--preset", preset, "--mode", args.mode, "--keep-going",
                "--no-timestamp", "--output", str(csv_path),
                "--gnuplot", str(args.outdir / f"{preset}.gp")]
        if args.simulate:
            argv += ["--simulate", "--slots", args.slots, "--reps", args.reps,
                     "--seed", args.seed]
        code = cli.main(argv)
        print(f"{preset}: {csv_path} (exit {code})")
        status = max(status, code)
    return status


if __name__ == "__main__":
    sys.exit(main())
