"""Command-line interface: ``wassrates <subcommand> ...``.

Exit codes: 0 success (or consistent/inconclusive verdict), 1 internal
error, 2 input error, 3 refusal, 4 inconsistent verdict.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, experiments, multiscale, theory, verify
from .measures import EmpiricalMeasure, parse_measure
from .transport import (
    DimensionMismatch,
    SolverCapacityError,
    semidiscrete_wp,
    wasserstein_1d,
    wasserstein_assignment,
    wasserstein_entropic,
    wasserstein,
)

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_REFUSAL, EXIT_INCONSISTENT = 0, 1, 2, 3, 4


class InputError(Exception):
    pass


def dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False)


def _emit(obj, as_json, lines=None):
    if as_json:
        print(dumps(experiments._sanitize(obj)))
    else:
        for line in lines if lines is not None else [f"{k}: {v}" for k, v in obj.items()]:
            print(line)


def read_points(path):
    """Headerless CSV, one point per row; errors name the offending line."""
    rows = []
    width = None
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise InputError(f"{path}:{lineno}: cannot parse {','.join(row)!r} as numbers") from None
            if not all(math.isfinite(v) for v in vals):
                raise InputError(f"{path}:{lineno}: non-finite coordinate")
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise InputError(f"{path}:{lineno}: expected {width} columns, found {len(vals)}")
            rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no points")
    return EmpiricalMeasure(np.array(rows))


def _measure(spec):
    try:
        return parse_measure(spec)
    except ValueError as exc:
        raise InputError(str(exc)) from None


# --------------------------------------------------------------------------
# subcommands


def cmd_distance(args):
    x = read_points(args.source)
    target = Path(args.target)
    plan = None
    if target.exists():
        y = read_points(args.target)
        if x.dim != y.dim:
            raise InputError(f"dimension mismatch: {x.dim} vs {y.dim}")
        method = args.method
        if method == "auto":
            value, method = wasserstein(x, y, args.p, args.exact_cap, args.assignment_cap, args.epsilon)
            if args.plan and method != "entropic":
                solver = wasserstein_1d if method == "exact-1d" else wasserstein_assignment
                kw = {} if method == "exact-1d" else {"cap": args.assignment_cap}
                value, plan = solver(x, y, args.p, **kw)
        elif method == "exact-1d":
            value, plan = wasserstein_1d(x, y, args.p)
        elif method == "assignment":
            value, plan = wasserstein_assignment(x, y, args.p, cap=args.assignment_cap)
        else:
            value, plan, conv, err = wasserstein_entropic(x, y, args.p, epsilon=args.epsilon,
                                                          materialize_cap=args.assignment_cap)
        if args.plan and plan is None and method == "entropic":
            value, plan, _, _ = wasserstein_entropic(x, y, args.p, epsilon=args.epsilon,
                                                     materialize_cap=args.assignment_cap)
    else:
        mu = _measure(args.target)
        if x.dim != mu.dim:
            raise InputError(f"dimension mismatch: {x.dim} vs {mu.dim}")
        value, spread = semidiscrete_wp(x, mu, args.p, args.oversample, args.seed, args.exact_cap,
                                        args.assignment_cap)
        method = "quantile" if x.dim == 1 else "semidiscrete"
    if args.plan:
        if plan is None:
            raise InputError("no transport plan for a measure target")
        Path(args.plan).write_text(dumps(plan.to_json()) + "\n")
    out = {"p": args.p, "wpp": value, "wp": value ** (1.0 / args.p), "method": method}
    _emit(out, args.json, [f"W_p^p {value!r}", f"W_p {out['wp']!r}", f"method {method}"])
    return EXIT_OK


def cmd_bound(args):
    mu = _measure(args.measure)
    if args.sample:
        x = read_points(args.sample)
    elif args.draw:
        x = mu.sample(args.draw, args.seed)
    else:
        raise InputError("give a sample file (--sample) or a sample size to draw (--draw)")
    if x.dim != mu.dim:
        raise InputError(f"dimension mismatch: {x.dim} vs {mu.dim}")
    if not getattr(mu, "has_cell_mass", False):
        raise InputError(f"{args.measure} has no cell-mass oracle")
    prof = multiscale.delta_p(x, mu, args.p, args.mmax, args.lmax, args.M)
    if args.json:
        _emit(prof.to_json(), True)
    else:
        _emit(prof.summary(), False)
    return EXIT_OK


def _predict_rows(params, args):
    rows = []
    stats = theory.STATISTICS if args.statistic == "all" else [args.statistic]
    for stat in stats:
        try:
            pred = theory.moment_rate(params, stat, theory.as_fraction(args.epsilon))
            rows.append({"statistic": stat, **pred.to_json()})
        except ValueError as exc:
            rows.append({"statistic": stat, "error": str(exc)})
    return rows


def cmd_predict(args):
    try:
        params = theory.ProblemParams(args.p, args.d, args.r, args.moment_kind, args.sqrt_h, args.dim_override)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", theory.NearBoundaryWarning)
        out = {"params": params.to_json(), "regime": theory.classify(params), "predictions": _predict_rows(params, args)}
        if args.alpha is not None:
            out["baum_katz"] = theory.baum_katz_weights(params, args.alpha).to_json()
            try:
                out["moderate_deviation"] = theory.moderate_deviation_rate(params, args.alpha).to_json()
            except ValueError as exc:
                out["moderate_deviation"] = {"error": str(exc)}
        if args.n is not None and args.x is not None:
            try:
                out["deviation_bound"] = theory.deviation_bound(params, args.n, args.x)
            except ValueError as exc:
                out["deviation_bound"] = None
                out["deviation_bound_error"] = str(exc)
    if args.json:
        _emit(out, True)
        return EXIT_OK
    lines = [f"regime: {out['regime']} (threshold {theory.threshold(params)})"]
    for row in out["predictions"]:
        if "error" in row:
            lines.append(f"  {row['statistic']:<15} n/a ({row['error']})")
        else:
            logs = f" (log n)^{row['log_power']}" if row["log_power"] != "0" else ""
            expo = "no prediction" if row["exponent"] is None else f"n^({row['exponent']}){logs}"
            lines.append(f"  {row['statistic']:<15} {row['regime']:<10} {expo}  [{row['source']}]")
    for key in ("baum_katz", "moderate_deviation", "deviation_bound"):
        if key in out:
            lines.append(f"{key}: {out[key]}")
    lines.extend(f"warning: {w.message}" for w in caught)
    _emit(None, False, lines)
    return EXIT_OK


def _verdict_code(result):
    return EXIT_INCONSISTENT if result == "inconsistent" else EXIT_OK


def _load(args):
    return experiments.load_config(args.config, seed=args.seed, threads=args.threads)


def cmd_rates(args):
    cfg = _load(args)
    report = experiments.run_moment_rate(cfg)
    paths = report.write(args.out, args.stem or "rates")
    if args.json:
        _emit(report.to_json(), True)
    else:
        pred = report.prediction
        lines = [f"{'n':>8} {'statistic':>14} {'stderr':>12}"]
        lines += [f"{r['n']:>8} {r['statistic']:>14.6g} {r['stderr']:>12.3g}" for r in report.rows]
        if report.fit is not None:
            lines.append(f"slope {report.fit.slope:.4f} +/- {report.fit.stderr:.4f} (R^2 {report.fit.r_squared:.4f})")
        lines.append(f"predicted {pred.exponent} ({pred.regime}, {pred.source}); band {report.band}")
        lines.append(f"verdict: {report.verdict}")
        lines.append(f"wrote {paths['json']}")
        _emit(None, False, lines)
    return _verdict_code(report.verdict)


def cmd_deviations(args):
    cfg = _load(args)
    report = experiments.run_deviation_tail(cfg)
    paths = report.write(args.out, args.stem or "deviations")
    if args.json:
        _emit(report.to_json(), True)
    else:
        lines = [f"predicted decay n^({report.prediction.exponent}) at x n^(alpha-1), alpha = {cfg.alpha}"]
        for f in report.fits:
            slope = "-" if f["fit"] is None else f"{f['fit']['slope']:.4f}"
            lines.append(f"x {f['x']:.4g}: slope {slope}, usable cells {f['cells']}, {f['verdict']}")
        lines.append(f"verdict: {report.verdict}")
        lines.append(f"wrote {paths['json']}")
        _emit(None, False, lines)
    return _verdict_code(report.verdict)


def cmd_trajectory(args):
    cfg = _load(args)
    report = experiments.run_running_max(cfg)
    paths = report.write(args.out, args.stem or "trajectory")
    if args.json:
        _emit(report.to_json(), True)
    else:
        lines = [f"normalization {report.normalization}; checkpoints {report.checkpoints[0]}..{report.checkpoints[-1]}"]
        lines += report.notes
        lines.append(f"verdict: {report.verdict}")
        lines.append(f"wrote {paths['json']}")
        _emit(None, False, lines)
    return _verdict_code(report.verdict)


def cmd_verify(args):
    try:
        results = verify.run(args.group, fault=args.fault)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    status = verify.group_status(results)
    if args.json:
        _emit({"groups": status, "checks": [r.__dict__ for r in results]}, True)
    else:
        lines = []
        for res in results:
            lines.append(f"[{'pass' if res.passed else 'FAIL'}] {res.group}: {res.name}")
            if not res.passed:
                lines.append("       " + res.message.splitlines()[0])
        lines += [f"{g}: {'pass' if ok else 'FAIL'}" for g, ok in status.items()]
        _emit(None, False, lines)
    return EXIT_OK if all(status.values()) else EXIT_INTERNAL


def cmd_export_table(args):
    text = dumps(theory.export_table()) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _common(sp):
    sp.add_argument("--seed", type=int, default=None, help="random seed (default: 0, or the config value)")
    sp.add_argument("--threads", type=int, default=None, help="worker processes; 0 = one per CPU")
    sp.add_argument("--json", action="store_true", help="emit JSON on stdout")


def build_parser():
    ap = argparse.ArgumentParser(prog="wassrates", description="Empirical Wasserstein rates and multiscale bounds.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("distance", help="W_p^p between two point files, or a point file and a measure")
    sp.add_argument("source", help="CSV point file")
    sp.add_argument("target", help="CSV point file or measure spec such as uniform:d=2")
    sp.add_argument("--p", type=float, default=1.0)
    sp.add_argument("--method", choices=["auto", "exact-1d", "assignment", "entropic"], default="auto")
    sp.add_argument("--plan", help="write the transport plan as JSON")
    sp.add_argument("--epsilon", type=float, default=None)
    sp.add_argument("--oversample", type=int, default=4)
    sp.add_argument("--exact-cap", type=int, default=512)
    sp.add_argument("--assignment-cap", type=int, default=2048)
    _common(sp)
    sp.set_defaults(func=cmd_distance)

    sp = sub.add_parser("bound", help="multiscale profile of a sample against a catalog measure")
    sp.add_argument("measure")
    src = sp.add_mutually_exclusive_group()
    src.add_argument("--sample", help="CSV point file")
    src.add_argument("--draw", type=int, help="draw this many points from the measure instead")
    sp.add_argument("--p", type=float, default=1.0)
    sp.add_argument("--mmax", type=int, default=None)
    sp.add_argument("--lmax", type=int, default=None)
    sp.add_argument("--M", type=float, default=None)
    _common(sp)
    sp.set_defaults(func=cmd_bound)

    sp = sub.add_parser("predict", help="regime and predicted exponents")
    sp.add_argument("--p", required=True)
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--r", required=True)
    sp.add_argument("--statistic", choices=("all",) + theory.STATISTICS, default="all")
    sp.add_argument("--moment-kind", choices=("weak", "strong"), default="weak")
    sp.add_argument("--sqrt-h", action="store_true", default=None, help="assume int t^(p-1) sqrt(H) < inf")
    sp.add_argument("--dim-override", type=int, default=None)
    sp.add_argument("--epsilon", default="1/10", help="epsilon in the Rosenthal-type correction")
    sp.add_argument("--alpha", default=None, help="moderate-deviation / Baum-Katz exponent")
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--x", type=float, default=None)
    _common(sp)
    sp.set_defaults(func=cmd_predict)

    for name, func, help_ in (
        ("rates", cmd_rates, "moment-rate experiment from a config file"),
        ("deviations", cmd_deviations, "deviation-tail experiment from a config file"),
        ("trajectory", cmd_trajectory, "running-max trajectory diagnostic from a config file"),
    ):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config", help="JSON config with ExperimentConfig keys")
        sp.add_argument("--out", default="results", help="output directory")
        sp.add_argument("--stem", default=None, help="output file stem")
        _common(sp)
        sp.set_defaults(func=func)

    sp = sub.add_parser("verify", help="run the invariant suite")
    sp.add_argument("--group", action="append", choices=verify.GROUPS)
    sp.add_argument("--fault", choices=verify.FAULTS, default=None, help=argparse.SUPPRESS)
    _common(sp)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("export-table", help="theory exponent table as JSON")
    sp.add_argument("--out", default=None)
    _common(sp)
    sp.set_defaults(func=cmd_export_table)
    return ap


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is None and args.command in ("distance", "bound"):
        args.seed = 0
    try:
        return args.func(args)
    except (InputError, experiments.ConfigError, DimensionMismatch, SolverCapacityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except experiments.ExperimentRefusal as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # last resort: report and signal an internal error
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
