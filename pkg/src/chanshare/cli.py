"""Command-line front end: analyze, simulate, sweep, validate.

Exit codes: 0 success, 1 numeric or validation failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime
import math
import sys
import warnings
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import analytics, simulator
from .config import DEFAULTS, ConfigError, SystemConfig, load_config, per_m2_to_per_km2

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

MAX_SEED = 2**64 - 1

# Figure presets. Bump PRESET_VERSION whenever a grid changes.
PRESET_VERSION = 1
PRESETS = {
    "fig2": {"axis": "ap_density", "values": "10:1000:10",
             "series": ("request_rate", (0.03, 0.1, 1.0)), "plot": ("pi0",)},
    "fig3": {"axis": "ap_density", "values": "10:1000:10",
             "series": ("request_rate", (0.03, 0.1, 1.0)), "plot": ("plr",)},
    "fig4": {"axis": "suppression_radius", "values": "50:600:25",
             "series": None, "plot": ("plr", "plr1", "plr2")},
}

EXTRA_COLUMNS = ("plr1", "plr2", "plr_overflow", "plr_busy", "n_roots", "flags", "status")


def sweep_columns():
    return (("axis", "value") + analytics.CSV_COLUMNS + EXTRA_COLUMNS
            + tuple(simulator.run_csv_header()))


def _numeric_fields():
    out = []
    for f in dataclasses.fields(SystemConfig):
        if f.name in ("derived", "coverage_rs"):
            continue
        if isinstance(f.default, (int, float)) and not isinstance(f.default, bool):
            out.append(f.name)
    return tuple(out)


NUMERIC_FIELDS = _numeric_fields()


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    modes: tuple = ("corrected",)
    series: tuple | None = None  # (field, values) crossed with the axis
    simulate: bool = False
    slots: int = 20_000
    warmup: int | None = None
    replications: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.axis not in NUMERIC_FIELDS:
            raise ConfigError([("axis", f"{self.axis!r} is not a numeric config field")])
        if not self.values:
            raise ConfigError([("values", "empty value list")])


def parse_values(text):
    """``a,b,c`` or an inclusive range ``start:stop:step``."""
    text = text.strip()
    try:
        if ":" in text:
            start, stop, step = (float(p) for p in text.split(":"))
            if step <= 0 or stop < start:
                raise ValueError
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            return tuple(float(v) for v in np.round(start + step * np.arange(n), 12))
        vals = tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise ConfigError([("values", f"cannot parse {text!r}")]) from None
    if not vals:
        raise ConfigError([("values", "empty value list")])
    return vals


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


@contextmanager
def _open_out(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _writer(fh, args):
    if not args.no_timestamp:
        stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
        fh.write(f"# generated {stamp}\n")
    return csv.writer(fh, lineterminator="\n")


def _modes(args):
    return ("paper", "corrected") if args.mode == "both" else (args.mode,)


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)


# ---------------------------------------------------------------- commands

def _analysis_row(cfg, mode, root):
    res = analytics.analyze(cfg, mode, root=root)
    loss = res.losses
    extra = [loss.access, loss.sinr, loss.overflow, loss.busy,
             max(1, len(res.state.roots)), " | ".join(res.flags), "ok"]
    return res, res.csv_row() + extra


def cmd_analyze(cfg, args):
    cols = analytics.CSV_COLUMNS + EXTRA_COLUMNS
    rows = []
    for mode in _modes(args):
        try:
            _, row = _analysis_row(cfg, mode, args.root)
        except (analytics.FixedPointError, analytics.QuadratureError) as exc:
            _err(f"{mode}: {exc}")
            return EXIT_FAIL
        rows.append(row)
    with _open_out(args.output) as fh:
        w = _writer(fh, args)
        w.writerow(cols)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return EXIT_OK


def _run_sim(cfg, args):
    return simulator.run(cfg, slots=args.slots, warmup=args.warmup, replications=args.reps,
                         seed=args.seed, workers=args.workers)


def cmd_simulate(cfg, args):
    res = _run_sim(cfg, args)
    with _open_out(args.output) as fh:
        w = _writer(fh, args)
        w.writerow(res.csv_header() + ["hardcore_violations", "conserved"])
        w.writerow([_fmt(v) for v in res.csv_row()] + [res.hardcore_violations, res.conserved])
    if res.hardcore_violations or not res.conserved:
        _err("simulation invariant violated")
        return EXIT_FAIL
    return EXIT_OK


def _sweep_spec(args):
    if args.preset:
        p = PRESETS[args.preset]
        axis, values, series = p["axis"], parse_values(p["values"]), p["series"]
        if args.axis or args.values:
            raise ConfigError([("preset", "--preset excludes --axis/--values")])
    else:
        if not (args.axis and args.values):
            raise ConfigError([("sweep", "need --preset or both --axis and --values")])
        axis, values, series = args.axis, parse_values(args.values), None
    return SweepSpec(axis=axis, values=values, modes=_modes(args), series=series,
                     simulate=args.simulate, slots=args.slots, warmup=args.warmup,
                     replications=args.reps, seed=args.seed)


def sweep_points(cfg, spec):
    """Configs in output order: series value, then axis value."""
    outer = [(None, cfg)]
    if spec.series:
        name, vals = spec.series
        outer = [(v, cfg.replace(**{name: v})) for v in vals]
    for _, base in outer:
        for v in spec.values:
            yield v, base.replace(**{spec.axis: v})


def cmd_sweep(cfg, args):
    spec = _sweep_spec(args)
    points = list(sweep_points(cfg, spec))  # validates every value before writing
    n_sim = len(simulator.run_csv_header())
    failed = 0
    with _open_out(args.output) as fh:
        w = _writer(fh, args)
        w.writerow(sweep_columns())
        for value, point in points:
            sim_cells = [""] * n_sim
            if spec.simulate:
                sim_cells = [_fmt(v) for v in _run_sim(point, args).csv_row()]
            for mode in spec.modes:
                try:
                    _, row = _analysis_row(point, mode, args.root)
                except (analytics.FixedPointError, analytics.QuadratureError) as exc:
                    failed += 1
                    if not args.keep_going:
                        fh.flush()
                        _err(f"{spec.axis}={value:g} ({mode}): {exc}")
                        return EXIT_FAIL
                    row = _failed_row(point, mode, exc)
                w.writerow([spec.axis, _fmt(value)] + [_fmt(v) for v in row] + sim_cells)
            fh.flush()
    if args.gnuplot:
        write_gnuplot(args.gnuplot, args.output, spec, PRESETS.get(args.preset, {}).get("plot"))
    if failed:
        print(f"warning: {failed} row(s) without a solution", file=sys.stderr)
    return EXIT_OK


def _failed_row(cfg, mode, exc):
    kind = "no_root" if isinstance(exc, analytics.FixedPointError) else "quadrature"
    head = [mode, cfg.user_density, cfg.ap_density, cfg.request_rate, cfg.suppression_radius]
    n_nan = len(analytics.CSV_COLUMNS) - len(head) + 4
    return head + [math.nan] * n_nan + [0, "", kind]


def write_gnuplot(path, data_path, spec, metrics=None):
    metrics = metrics or ("pi0", "plr")
    cols = sweep_columns()
    data = data_path or "sweep.csv"
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set xlabel '{spec.axis}'",
        "plot \\",
    ]
    plots = []
    for m in metrics:
        idx = cols.index(m) + 1
        plots.append(f"  '{data}' using 2:{idx} with linespoints title '{m}'")
    lines.append(", \\\n".join(plots))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


VALIDATE_METRICS = ("pi0", "mu", "P_ai", "active_density", "plr")
PI0_TOL = 0.02
Z_TOL = 3.0
IDENTITY_TOL = 1e-12


def _analytic_columns(res):
    return {"pi0": res.state.pi0, "mu": res.state.expected_mu, "P_ai": res.ap_idle,
            "active_density": per_m2_to_per_km2(res.active_density), "plr": res.plr_total}


def _paper_mu_at(cfg, pi0):
    """Printed contention form at ``pi0`` plus any out-of-range flags it raises."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", analytics.ModelWarning)
        mu = analytics.expected_mu_contention_closed(pi0, cfg.nu, "paper")
    return mu, [f"paper: E(mu) at the corrected pi0 {pi0:.6g}: {w.message}" for w in caught]


def _z(sim, se, ref):
    if math.isnan(sim) or math.isnan(se) or se <= 0:
        return math.nan
    return (sim - ref) / se


def validate_report(cfg, args):
    """Rows of (metric, paper, corrected, simulated, stderr, z, check), failures, flags.

    Only corrected-mode checks can fail the report; paper columns are informative.
    """
    try:
        corrected = analytics.analyze(cfg, "corrected", root=args.root)
    except (analytics.FixedPointError, analytics.QuadratureError) as exc:
        return None, [f"corrected analytics ({exc})"], []
    # the printed form judged at the operating point the corrected model predicts
    _, flags = _paper_mu_at(cfg, corrected.state.pi0)
    try:
        paper_res = analytics.analyze(cfg, "paper", root=args.root)
        paper = _analytic_columns(paper_res)
        flags += [f"paper: {f}" for f in paper_res.flags]
    except (analytics.FixedPointError, analytics.QuadratureError) as exc:
        paper = dict.fromkeys(VALIDATE_METRICS, math.nan)
        flags.append(f"paper: {exc}")
    flags += [f"corrected: {f}" for f in corrected.flags]
    ana = _analytic_columns(corrected)

    sim = _run_sim(cfg, args)
    sim_mean = dict(sim.mean, plr=sim.mean["plr_total"])
    sim_se = dict(sim.stderr, plr=sim.stderr["plr_total"])
    sim_mean["active_density"] = per_m2_to_per_km2(sim_mean["active_density"])
    sim_se["active_density"] = per_m2_to_per_km2(sim_se["active_density"])

    rows, failures = [], []

    def add(metric, p, a, s, se, z, ok, note=None):
        check = note or ("pass" if ok else "fail")
        rows.append([metric, p, a, s, se, z, check])
        if check == "fail":
            failures.append(metric)

    for m in VALIDATE_METRICS:
        s, se = sim_mean[m], sim_se[m]
        z = _z(s, se, ana[m])
        if m == "pi0":
            add(m, paper[m], ana[m], s, se, z, abs(s - ana[m]) <= PI0_TOL)
        elif m == "P_ai":
            add(m, paper[m], ana[m], s, se, z, math.isnan(z) or abs(z) <= Z_TOL)
        elif m == "plr" and math.isnan(s):
            add(m, paper[m], ana[m], s, se, z, True, "undefined (no requests)")
        else:
            add(m, paper[m], ana[m], s, se, z, True, "info")

    gap = decomposition_gap(sim)
    add("P_ai_identity", math.nan, math.nan, gap, math.nan, math.nan, gap <= IDENTITY_TOL)
    add("hardcore_violations", math.nan, math.nan, float(sim.hardcore_violations),
        math.nan, math.nan, sim.hardcore_violations == 0)
    add("conservation", math.nan, math.nan, float(sim.conserved), math.nan, math.nan,
        sim.conserved)
    return rows, failures, flags


def decomposition_gap(sim):
    """Largest |P_ai - (pi0 + (1 - pi0)(1 - mu))| over replications, all simulated."""
    worst = 0.0
    for rep in sim.per_replication:
        e = rep.estimates()
        if any(math.isnan(e[k]) for k in ("pi0", "mu", "P_ai")):
            continue
        worst = max(worst, abs(e["P_ai"] - (e["pi0"] + (1 - e["pi0"]) * (1 - e["mu"]))))
    return worst


def cmd_validate(cfg, args):
    rows, failures, flags = validate_report(cfg, args)
    with _open_out(args.output) as fh:
        w = _writer(fh, args)
        if rows is not None:
            w.writerow(["metric", "analytic_paper", "analytic_corrected", "simulated",
                        "stderr", "z", "check"])
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        for f in flags:
            fh.write(f"# flag {f}\n")
        fh.write("# verdict " + ("PASS" if not failures else "FAIL " + ",".join(failures)) + "\n")
    if failures:
        _err("failed: " + ", ".join(failures))
        return EXIT_FAIL
    return EXIT_OK


# ------------------------------------------------------------------ parser

def _seed(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v <= MAX_SEED:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _nonneg(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value parameter file (defaults otherwise)")
    common.add_argument("--mode", choices=("paper", "corrected", "both"), default="corrected")
    common.add_argument("--root", choices=("lowest", "highest", "unique"), default="lowest",
                        help="which balance root to report when several exist")
    common.add_argument("--output", help="output file (stdout if omitted)")
    common.add_argument("--no-timestamp", action="store_true",
                        help="omit the '# generated' header line")

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--seed", type=_seed, default=0)
    sim.add_argument("--slots", type=_positive, default=20_000)
    sim.add_argument("--warmup", type=_nonneg, default=None)
    sim.add_argument("--reps", type=_positive, default=10)
    sim.add_argument("--workers", type=_positive, default=1)

    p = argparse.ArgumentParser(prog="chanshare", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="one analytic row")
    sub.add_parser("simulate", parents=[common, sim], help="Monte-Carlo run")
    sw = sub.add_parser("sweep", parents=[common, sim], help="parameter sweep to CSV")
    sw.add_argument("--preset", choices=sorted(PRESETS))
    sw.add_argument("--axis", choices=NUMERIC_FIELDS)
    sw.add_argument("--values", help="a,b,c or start:stop:step (inclusive)")
    sw.add_argument("--simulate", action="store_true", help="add simulation columns")
    sw.add_argument("--keep-going", action="store_true",
                    help="write unsolvable rows with status instead of aborting")
    sw.add_argument("--gnuplot", help="also write a gnuplot script to this path")
    sub.add_parser("validate", parents=[common, sim], help="analytics vs simulation report")
    return p


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "sweep": cmd_sweep,
            "validate": cmd_validate}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else DEFAULTS
        if args.command != "analyze" and args.warmup is not None and args.warmup >= args.slots:
            raise ConfigError([("warmup", "must be smaller than --slots")])
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        for name, text in exc.problems:
            _err(f"{name}: {text}")
        return EXIT_USAGE
    except (analytics.FixedPointError, analytics.QuadratureError) as exc:
        _err(str(exc))
        return EXIT_FAIL
    except ValueError as exc:
        _err(str(exc))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
