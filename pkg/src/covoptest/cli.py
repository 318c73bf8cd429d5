"""Command-line interface: ``covoptest test | simulate | power``.

Exit codes are 0 on success (a rejection is a result, not an error), 2 on
invalid input and 3 on numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from importlib import resources

import jsonschema
import numpy as np

from . import __version__
from .cptest import CALIBRATIONS, ESTIMATORS, UPSILON_MODES, TestConfig, run_test
from .estim import KERNELS
from .fcore import Grid
from .io import LAYOUTS, IngestError, ingest_csv
from .power import FCPCModel, fourier_basis, mc_size_power, sine_basis, theoretical_power
from .quadform import DEFAULT_N_BOOT, ChiSquareMixture, quantile_from_draws, sample_mixture

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
SUMMARY_SCHEMA = "covop-sim/1"
NULL_TABLE_LEVELS = np.round(np.arange(0.005, 1.0, 0.005), 3)


class InputError(ValueError):
    pass


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="covoptest", description="Tests of equality of covariance operators.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="test equality of covariance operators of grouped curves")
    t.add_argument("--data", required=True, help="CSV file of curves")
    t.add_argument("--layout", choices=LAYOUTS, default="wide")
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument("--n-boot", type=int, default=DEFAULT_N_BOOT)
    qg = t.add_mutually_exclusive_group()
    qg.add_argument("--q", type=_positive_int, default=None, help="fixed tensor-basis size")
    qg.add_argument("--q-var-frac", type=float, default=0.99, help="trace fraction for the automatic q")
    t.add_argument("--upsilon", choices=UPSILON_MODES, default="empirical")
    t.add_argument("--estimator", choices=ESTIMATORS, default="empirical")
    t.add_argument("--bandwidth", type=float, default=None)
    t.add_argument("--kernel", choices=sorted(KERNELS), default="epanechnikov")
    t.add_argument("--calibration", choices=CALIBRATIONS, default="mixture")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--output", help="write the JSON report here instead of stdout")
    t.add_argument("--null-table", help="write level,quantile rows of the estimated null law (mixture only)")
    t.set_defaults(func=cmd_test)

    for name, func, text in (
        ("simulate", cmd_simulate, "Monte Carlo rejection rate for a scenario"),
        ("power", cmd_power, "Monte Carlo and theoretical power for a scenario"),
    ):
        s = sub.add_parser(name, help=text)
        s.add_argument("--scenario", required=True, help="scenario JSON file")
        s.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
        s.add_argument("--reps", type=_positive_int, default=None, help="overrides the scenario reps")
        s.add_argument("--csv", help="write per-replication rows here")
        s.add_argument("--output", help="write the JSON summary here instead of stdout")
        s.add_argument("--threads", type=_positive_int, default=1, help="worker processes")
        if name == "power":
            s.add_argument("--n-draws", type=_positive_int, default=10**6, help="draws for the theoretical power")
        s.set_defaults(func=func)
    return p


def _emit(text, path):
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def cmd_test(args):
    config = TestConfig(
        alpha=args.alpha,
        n_boot=args.n_boot,
        q=args.q,
        var_frac=args.q_var_frac,
        upsilon_mode=args.upsilon,
        estimator=args.estimator,
        bandwidth=args.bandwidth,
        kernel=args.kernel,
        calibration=args.calibration,
        seed=args.seed,
    )
    if args.null_table and config.calibration != "mixture":
        raise InputError("--null-table is only available with --calibration mixture")
    samples = ingest_csv(args.data, args.layout)
    if len(samples) < 2:
        raise InputError(f"the data hold {len(samples)} group(s); at least 2 are needed")
    report = run_test(samples, config)
    if args.null_table:
        draws = sample_mixture(ChiSquareMixture(report.theta_hat), config.n_boot, config.seed)
        with open(args.null_table, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["level", "quantile"])
            for lv in NULL_TABLE_LEVELS:
                w.writerow([repr(float(lv)), repr(quantile_from_draws(draws, lv))])
    _emit(report.to_json(), args.output)
    return EXIT_OK


def load_scenario(path):
    """Read and validate a scenario file; errors name the offending field."""
    with open(path) as fh:
        try:
            scenario = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from None
    schema = json.loads(resources.files("covoptest").joinpath("schemas/scenario.json").read_text())
    err = jsonschema.exceptions.best_match(jsonschema.Draft202012Validator(schema).iter_errors(scenario))
    if err is not None:
        raise InputError(f"scenario field {err.json_path}: {err.message}")
    return scenario


def scenario_model(scenario):
    g = scenario.get("grid", {})
    grid = Grid.uniform(g.get("start", 0.0), g.get("stop", 1.0), g.get("size", 51))
    lam = scenario["eigenvalues"]
    make_basis = fourier_basis if scenario.get("basis", "sine") == "fourier" else sine_basis
    return FCPCModel(
        grid,
        lam,
        make_basis(grid, len(lam)),
        deltas=scenario.get("deltas"),
        score_law=scenario.get("score_law", "gaussian"),
        df=scenario.get("df"),
        scale2=scenario.get("scale2", 1.0),
    )


def _simulate(args, with_theory):
    scenario = load_scenario(args.scenario)
    model = scenario_model(scenario)
    sizes = scenario["sizes"]
    seed = args.seed if args.seed is not None else scenario.get("seed", 0)
    reps = args.reps if args.reps is not None else scenario["reps"]
    config = TestConfig(**scenario.get("test", {}), seed=seed)
    sid = scenario.get("id", "scenario")
    res = mc_size_power(model, sizes, config, reps=reps, seed=seed, n_jobs=args.threads)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["scenario_id", "rep", "statistic", "p_value"])
            for r, (st, pv) in enumerate(zip(res.statistics, res.p_values)):
                w.writerow([sid, r, repr(float(st)), repr(float(pv))])
    summary = {
        "schema": SUMMARY_SCHEMA,
        "version": __version__,
        "command": args.command,
        "scenario_id": sid,
        "sizes": list(sizes),
        "reps": reps,
        "seed": seed,
        "alpha": config.alpha,
        "rejections": res.rejections,
        "rejection_rate": res.rejection_rate,
        "mc_stderr": res.mc_stderr,
    }
    if with_theory:
        if len(sizes) != 2:
            summary["theoretical"] = None
            summary["notes"] = ["theoretical power is available for two samples only"]
        else:
            total = int(sum(sizes))
            limit = theoretical_power(model, sizes, config.alpha, args.n_draws, seed)
            finite = theoretical_power(model, sizes, config.alpha, args.n_draws, seed, total_n=total)
            summary["theoretical"] = {
                "limit_power": limit.power,
                "finite_n_power": finite.power,
                "critical_value": limit.critical_value,
                "theta": limit.theta,
                "eta": limit.eta,
                "unexplained_drift": limit.residual,
            }
    _emit(json.dumps(summary, indent=2, allow_nan=False), args.output)
    return EXIT_OK


def cmd_simulate(args):
    return _simulate(args, with_theory=False)


def cmd_power(args):
    return _simulate(args, with_theory=True)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except np.linalg.LinAlgError as exc:
        print(f"covoptest: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (IngestError, InputError, ValueError, TypeError, OSError) as exc:
        print(f"covoptest: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ArithmeticError as exc:
        print(f"covoptest: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
