"""Command line interface.

Three subcommands:

    fit         estimate coefficients and variances from a cohort CSV
    simulate    run a Monte Carlo study from a JSON config
    efficiency  asymptotic relative efficiency across subcohort fractions

Exit codes: 0 success, 2 invalid input or config, 3 numerical failure,
4 filesystem problem (unreadable input, or output exists without --force).
All outputs are deterministic given the inputs; nothing records wall time.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .data import TransformSpec, read_cohort_csv, validate_cohort
from .errors import NumericError, ValidationError
from .solver import SolveOptions, solve_gehan, solve_logrank
from .study import (config_from_dict, efficiency_curve, efficiency_to_csv,
                    report_to_csv, run_study)
from .variance import (confidence_interval, corrected_variance,
                       influence_contributions, sandwich_variance,
                       slope_matrix, weight_correction)
from .weights import (ALPHA_SOURCES, SCHEMES, WeightPlan, assign_weights,
                      estimate_fractions, sampling_fraction_cov)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="rankaft",
        description="Weighted rank estimation for accelerated failure "
                    "time models under case-cohort and missing-data "
                    "designs.")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a model from a cohort CSV")
    fit.add_argument("--input", required=True, help="cohort CSV path")
    fit.add_argument("--out", help="write the JSON report here "
                                   "(default: stdout)")
    fit.add_argument("--transform", choices=("identity", "log"),
                     default="identity",
                     help="time transform applied to the time column")
    fit.add_argument("--scheme", choices=SCHEMES, default="full_data",
                     help="weighting scheme")
    fit.add_argument("--alpha-source", choices=ALPHA_SOURCES,
                     default="true_pi", dest="alpha_source",
                     help="where selection probabilities come from")
    fit.add_argument("--rho", choices=("gehan", "logrank"), default="gehan",
                     help="rank weight function")
    fit.add_argument("--level", type=float, default=0.95,
                     help="confidence level")
    fit.add_argument("--force", action="store_true",
                     help="overwrite an existing output file")

    sim = sub.add_parser("simulate", help="run a Monte Carlo study")
    sim.add_argument("--config", required=True, help="JSON study config")
    sim.add_argument("--out", required=True, help="report CSV path")
    sim.add_argument("--seed", type=int,
                     help="override the config's master_seed")
    sim.add_argument("--threads", type=int, default=1,
                     help="worker processes; the report is identical "
                          "for any value")
    sim.add_argument("--level", type=float, default=0.95,
                     help="confidence level for coverage")
    sim.add_argument("--force", action="store_true",
                     help="overwrite an existing output file")

    eff = sub.add_parser("efficiency",
                         help="asymptotic efficiency across fractions")
    eff.add_argument("--config", required=True, help="JSON study config")
    eff.add_argument("--fractions", required=True,
                     help="comma separated subcohort fractions, e.g. "
                          "0.05,0.15,0.25,1.0")
    eff.add_argument("--out", required=True, help="curve CSV path")
    eff.add_argument("--seed", type=int,
                     help="override the config's master_seed")
    eff.add_argument("--force", action="store_true",
                     help="overwrite an existing output file")
    return parser


def _check_out(path, force):
    if path and os.path.exists(path) and not force:
        raise OSError(f"output {path!r} exists; pass --force to overwrite")


def _load_config(path, seed):
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}")
    config = config_from_dict(raw)
    if seed is not None:
        if seed < 0:
            raise ValidationError("--seed must be nonnegative")
        config = dataclasses.replace(config, master_seed=seed)
    return config


def _cmd_fit(args):
    _check_out(args.out, args.force)
    if not 0.0 < args.level < 1.0:
        raise ValidationError("--level must be in (0, 1)")
    transform = TransformSpec(args.transform)
    cohort = read_cohort_csv(args.input, transform)
    plan = WeightPlan(args.scheme, args.alpha_source)
    violations = validate_cohort(cohort, plan)
    if violations:
        for v in violations:
            print(f"error: {v.message}", file=sys.stderr)
        return 2

    omega, w = assign_weights(cohort, plan)
    options = SolveOptions()
    fit_g = solve_gehan(cohort, omega, w, options)
    if args.rho == "gehan":
        fit = fit_g
    else:
        fit = solve_logrank(cohort, omega, w, options,
                            seed_theta=fit_g.theta_hat)

    contrib = influence_contributions(cohort, omega, w, fit.theta_hat,
                                      args.rho)
    slope = slope_matrix(cohort, omega, w, fit.theta_hat, args.rho)
    report = sandwich_variance(contrib, slope)
    fractions_out = None
    if plan.alpha_source == "estimated_fractions":
        fractions = estimate_fractions(cohort, plan)
        b_hat = weight_correction(cohort, omega, w, fit.theta_hat,
                                  args.rho, plan, fractions)
        v0 = sampling_fraction_cov(fractions)
        report = corrected_variance(report, b_hat, v0)
        var_mat = report.sigma_star
        fractions_out = {
            "strata": [str(s) for s in fractions.strata],
            "alpha": list(fractions.alpha),
            "gamma": list(fractions.gamma),
        }
    else:
        var_mat = report.sigma0

    flags = sorted(set(fit.flags) | set(report.flags))
    if var_mat is not report.sigma0 and np.diag(var_mat).min() <= 0.0:
        flags.append("sigma_star_nonpos_fallback")
        var_mat = report.sigma0
    ci = confidence_interval(fit.theta_hat, var_mat, args.level)

    payload = {
        "n": cohort.n,
        "d": cohort.d,
        "scheme": args.scheme,
        "alpha_source": args.alpha_source,
        "rho": args.rho,
        "theta_hat": [float(v) for v in fit.theta_hat],
        "se": [float(v) for v in np.sqrt(np.diag(var_mat))],
        "ci_level": args.level,
        "ci": [[float(lo), float(hi)] for lo, hi in ci],
        "sigma0": [[float(v) for v in row] for row in report.sigma0],
        "sigma_star": (None if report.sigma_star is None else
                       [[float(v) for v in row]
                        for row in report.sigma_star]),
        "fractions": fractions_out,
        "scaled_norm": float(fit.scaled_norm),
        "n_dropped": fit.n_dropped,
        "flags": flags,
    }
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_simulate(args):
    _check_out(args.out, args.force)
    if args.threads < 1:
        raise ValidationError("--threads must be at least 1")
    if not 0.0 < args.level < 1.0:
        raise ValidationError("--level must be in (0, 1)")
    config = _load_config(args.config, args.seed)
    report = run_study(config, workers=args.threads, level=args.level)
    report_to_csv(report, args.out)
    return 0


def _cmd_efficiency(args):
    _check_out(args.out, args.force)
    config = _load_config(args.config, args.seed)
    try:
        fractions = [float(tok) for tok in args.fractions.split(",") if tok]
    except ValueError:
        raise ValidationError(
            f"--fractions must be comma separated numbers, got "
            f"{args.fractions!r}")
    curve = efficiency_curve(config, fractions)
    efficiency_to_csv(curve, args.out)
    return 0


_COMMANDS = {
    "fit": _cmd_fit,
    "simulate": _cmd_simulate,
    "efficiency": _cmd_efficiency,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
