"""Full analytics-vs-simulation report at the default operating point.

Same run as the acceptance check (2e4 slots, 2e3 warmup, 10 replications);
takes a minute or two per core.

    python scripts/validate_defaults.py [--workers N] [--output report.csv]
"""

import sys

from chanshare import cli


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    return cli.main(["validate", "--slots", "20000", "--warmup", "2000", "--reps", "10",
                     "--seed", "2024", *argv])


if __name__ == "__main__":
    sys.exit(main())
