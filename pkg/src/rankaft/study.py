"""Monte Carlo engine for stratified case-cohort rank estimation.

The design: a Bernoulli covariate Z, a linear failure time model on a
location-scale error law, uniform censoring calibrated to a target
censoring fraction, and a binary surrogate Z* of Z that stratifies
Bernoulli subcohort selection with equal expected stratum counts.  Five
weighting methods are compared under both weight functions:

    full          everyone observed, unit weights
    pred_true     predictable subcohort weights, design probabilities
    pred_est      predictable weights, estimated stratum fractions
    nonpred_true  nonpredictable weights, design probabilities
    nonpred_est   nonpredictable weights, estimated stratum fractions

Replicates are reproducible and order-independent: replicate k draws from
an independent stream seeded by (master_seed, k), so reports are identical
for any worker count.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, stats as spstats

from .data import Cohort
from .errors import NumericError, RankAftError, ValidationError
from .solver import FitResult, SolveOptions, solve_gehan, solve_logrank
from .variance import (confidence_interval, corrected_variance,
                       influence_contributions, sandwich_variance,
                       slope_matrix, weight_correction)
from .weights import (WeightPlan, assign_weights, estimate_fractions,
                      sampling_fraction_cov)

ERROR_DISTS = ("normal", "logistic", "extreme_value")
METHODS = ("full", "pred_true", "pred_est", "nonpred_true", "nonpred_est")
WEIGHT_FNS = ("gehan", "logrank")

REPORT_COLUMNS = ("alpha_fraction", "weight", "method", "bias", "emp_var",
                  "ave_var", "coverage", "asym_var", "n_flagged")
EFFICIENCY_COLUMNS = ("fraction", "weight", "method", "asym_var", "rel_eff",
                      "rel_eff_same_weight")

# Stream tags that can never collide with replicate indices.
_BIG_COHORT_STREAM = 2 ** 32

# Flags that describe normal geometry of the criterion, not a failure.
_BENIGN_FLAGS = frozenset({"flat_region", "coordinate_stall_polished"})

_ALL_PAIRS = tuple((wf, m) for wf in WEIGHT_FNS for m in METHODS)


@dataclass(frozen=True)
class StudyConfig:
    """Complete description of one simulation study."""

    error_dist: str = "logistic"
    n: int = 2000
    theta0: float = 0.0
    cov_prob: float = 0.3
    zstar_sensitivity: float = 0.8
    zstar_specificity: float = 0.8
    target_censoring: float = 0.8
    subcohort_fraction: float = 0.15
    replications: int = 500
    master_seed: int = 0
    methods: tuple = _ALL_PAIRS
    censoring_window: tuple | None = None

    def __post_init__(self):
        if self.error_dist not in ERROR_DISTS:
            raise ValidationError(
                f"error_dist {self.error_dist!r} not one of {ERROR_DISTS}")
        if not isinstance(self.n, int) or self.n < 2:
            raise ValidationError(f"n must be an integer >= 2, got {self.n!r}")
        if not isinstance(self.replications, int) or self.replications < 1:
            raise ValidationError(
                f"replications must be a positive integer, got "
                f"{self.replications!r}")
        if not isinstance(self.master_seed, int) or self.master_seed < 0:
            raise ValidationError(
                f"master_seed must be a nonnegative integer, got "
                f"{self.master_seed!r}")
        if not 0.0 < self.cov_prob < 1.0:
            raise ValidationError("cov_prob must be in (0, 1)")
        for name in ("zstar_sensitivity", "zstar_specificity"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValidationError(f"{name} must be in (0, 1]")
        if not 0.0 < self.target_censoring < 0.99:
            raise ValidationError(
                "target_censoring must be in (0, 0.99); the censoring "
                "window starts at the error law's first percentile")
        if not 0.0 < self.subcohort_fraction <= 1.0:
            raise ValidationError("subcohort_fraction must be in (0, 1]")
        if not math.isfinite(self.theta0):
            raise ValidationError("theta0 must be finite")
        methods = tuple(tuple(pair) for pair in self.methods)
        if not methods:
            raise ValidationError("methods must be nonempty")
        seen = set()
        for pair in methods:
            if (len(pair) != 2 or pair[0] not in WEIGHT_FNS
                    or pair[1] not in METHODS):
                raise ValidationError(
                    f"methods entries must be (weight, method) pairs from "
                    f"{WEIGHT_FNS} x {METHODS}; got {pair!r}")
            if pair in seen:
                raise ValidationError(f"duplicate methods entry {pair!r}")
            seen.add(pair)
        object.__setattr__(self, "methods", methods)
        object.__setattr__(self, "theta0", float(self.theta0))
        if self.censoring_window is not None:
            window = tuple(float(v) for v in self.censoring_window)
            if len(window) != 2 or not all(math.isfinite(v) for v in window):
                raise ValidationError(
                    "censoring_window must be a finite (a, b) pair")
            if window[0] >= window[1]:
                raise ValidationError(
                    "censoring_window must satisfy a < b")
            object.__setattr__(self, "censoring_window", window)


_CONFIG_FIELDS = tuple(StudyConfig.__dataclass_fields__)


def config_from_dict(raw: dict) -> StudyConfig:
    """Build a config from parsed JSON, rejecting unknown keys by name."""
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object")
    unknown = sorted(set(raw) - set(_CONFIG_FIELDS))
    if unknown:
        raise ValidationError(f"invalid config keys: {unknown}")
    kwargs = dict(raw)
    if "methods" in kwargs:
        methods = kwargs["methods"]
        if not isinstance(methods, (list, tuple)):
            raise ValidationError("methods must be a list of pairs")
        kwargs["methods"] = tuple(tuple(p) for p in methods)
    if kwargs.get("censoring_window") is not None:
        window = kwargs["censoring_window"]
        if not isinstance(window, (list, tuple)):
            raise ValidationError("censoring_window must be an [a, b] pair")
        kwargs["censoring_window"] = tuple(window)
    for key in ("n", "replications", "master_seed"):
        if key in kwargs:
            v = kwargs[key]
            if isinstance(v, bool) or not isinstance(v, int):
                raise ValidationError(f"{key} must be an integer, got {v!r}")
    for key in ("theta0", "cov_prob", "zstar_sensitivity",
                "zstar_specificity", "target_censoring",
                "subcohort_fraction"):
        if key in kwargs:
            v = kwargs[key]
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ValidationError(f"{key} must be a number, got {v!r}")
            kwargs[key] = float(v)
    return StudyConfig(**kwargs)


def config_to_dict(config: StudyConfig) -> dict:
    return {
        "error_dist": config.error_dist,
        "n": config.n,
        "theta0": config.theta0,
        "cov_prob": config.cov_prob,
        "zstar_sensitivity": config.zstar_sensitivity,
        "zstar_specificity": config.zstar_specificity,
        "target_censoring": config.target_censoring,
        "subcohort_fraction": config.subcohort_fraction,
        "replications": config.replications,
        "master_seed": config.master_seed,
        "methods": [list(p) for p in config.methods],
        "censoring_window": (None if config.censoring_window is None
                             else list(config.censoring_window)),
    }


def _error_law(error_dist):
    if error_dist == "normal":
        return spstats.norm
    if error_dist == "logistic":
        return spstats.logistic
    # Minimum extreme value: the AFT convention, log of a Weibull.
    return spstats.gumbel_l


def _draw_errors(error_dist, rng, n):
    if error_dist == "normal":
        return rng.standard_normal(n)
    if error_dist == "logistic":
        return rng.logistic(0.0, 1.0, n)
    return -rng.gumbel(0.0, 1.0, n)


@lru_cache(maxsize=64)
def calibrate_censoring(error_dist, target_censoring, theta0=0.0,
                        cov_prob=0.3):
    """Censoring window [a, b] hitting the target censoring fraction.

    The window's left end sits at the first percentile of the failure time
    law (the Z-mixture of shifted errors); the right end solves

        (1 / (b - a)) * integral_a^b S_T(c) dc = target_censoring

    which is monotone decreasing in b.
    """
    if error_dist not in ERROR_DISTS:
        raise ValidationError(
            f"error_dist {error_dist!r} not one of {ERROR_DISTS}")
    law = _error_law(error_dist)
    p = cov_prob

    def surv(c):
        return (1.0 - p) * law.sf(c) + p * law.sf(c - theta0)

    def cdf(c):
        return (1.0 - p) * law.cdf(c) + p * law.cdf(c - theta0)

    lo = float(law.ppf(1e-4)) + min(0.0, theta0) - 1.0
    hi = float(law.ppf(0.5)) + max(0.0, theta0) + 1.0
    a = float(optimize.brentq(lambda c: cdf(c) - 0.01, lo, hi, xtol=1e-12))

    def censored_fraction(b):
        val, _ = integrate.quad(surv, a, b, limit=200)
        return val / (b - a)

    b_hi = a + 1.0
    for _ in range(200):
        if censored_fraction(b_hi) < target_censoring:
            break
        b_hi += max(1.0, b_hi - a)
    else:
        raise NumericError(
            "could not bracket the censoring window; target "
            f"{target_censoring} unreachable")
    b = float(optimize.brentq(
        lambda x: censored_fraction(x) - target_censoring,
        a + 1e-9, b_hi, xtol=1e-10))
    return a, b


def allocation_probs(cov_prob, sensitivity, specificity, fraction):
    """Stratum selection probabilities with equal expected allocation.

    Returns (pi0, pi1), the Bernoulli selection probability for surrogate
    strata 0 and 1.  Each stratum is allocated half the target fraction;
    a probability that would exceed 1 is capped and the remainder routed
    to the other stratum, keeping the overall expected fraction exact.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValidationError("fraction must be in (0, 1]")
    p1 = sensitivity * cov_prob + (1.0 - specificity) * (1.0 - cov_prob)
    p0 = 1.0 - p1
    if p1 <= 0.0 or p0 <= 0.0:
        raise ValidationError(
            "surrogate distribution is degenerate; both strata need mass")
    pi1 = fraction / (2.0 * p1)
    pi0 = fraction / (2.0 * p0)
    if pi1 > 1.0:
        pi1 = 1.0
        pi0 = (fraction - p1) / p0
    elif pi0 > 1.0:
        pi0 = 1.0
        pi1 = (fraction - p0) / p1
    return pi0, pi1


def generate_cohort(config: StudyConfig, replicate_index: int,
                    full_information: bool = False) -> Cohort:
    """Draw one replicate cohort from the stream (master_seed, index).

    By default covariates are only available where the two-phase design
    collects them (events and subcohort members); the rest are masked.
    ``full_information`` keeps every covariate visible, giving the
    complete-data view of the same draws for the full-cohort estimator.

    The censoring window comes from ``config.censoring_window`` when set,
    otherwise it is calibrated to the target censoring fraction.
    """
    if replicate_index < 0:
        raise ValidationError("replicate_index must be nonnegative")
    rng = np.random.default_rng([config.master_seed, replicate_index])
    n = config.n
    if config.censoring_window is not None:
        a, b = config.censoring_window
    else:
        a, b = calibrate_censoring(
            config.error_dist, config.target_censoring,
            config.theta0, config.cov_prob)
    pi0, pi1 = allocation_probs(
        config.cov_prob, config.zstar_sensitivity,
        config.zstar_specificity, config.subcohort_fraction)

    z = (rng.random(n) < config.cov_prob).astype(float)
    e = _draw_errors(config.error_dist, rng, n)
    t = config.theta0 * z + e
    c = rng.uniform(a, b, n)
    y = np.minimum(t, c)
    delta = (t <= c).astype(int)

    u = rng.random(n)
    zstar = np.where(z == 1.0, u < config.zstar_sensitivity,
                     u >= config.zstar_specificity).astype(int)
    pi = np.where(zstar == 1, pi1, pi0)
    sc = rng.random(n) < pi
    if full_information:
        observed = np.ones(n, dtype=bool)
    else:
        observed = (delta == 1) | sc

    return Cohort(
        y=y, delta=delta, z=z.reshape(-1, 1),
        stratum=zstar, observed=observed, in_subcohort=sc, pi=pi)


def plan_for_method(method: str) -> WeightPlan:
    if method == "full":
        return WeightPlan("full_data")
    scheme = ("case_cohort_predictable" if method.startswith("pred")
              else "case_cohort_nonpredictable")
    source = "estimated_fractions" if method.endswith("_est") else "true_pi"
    return WeightPlan(scheme, source)


@dataclass(frozen=True)
class ReplicateRow:
    """One (weight, method) outcome on one replicate."""

    theta_hat: float
    var_used: float
    sigma0_var: float
    covered: float
    flags: tuple


def _fit_and_variance(cohort, plan, weight_fn, fit: FitResult, theta0, level):
    """Variance pipeline shared by the replicate and asymptotic paths."""
    omega, w = assign_weights(cohort, plan)
    contrib = influence_contributions(cohort, omega, w, fit.theta_hat,
                                      weight_fn)
    slope = slope_matrix(cohort, omega, w, fit.theta_hat, weight_fn)
    report = sandwich_variance(contrib, slope)
    if plan.alpha_source == "estimated_fractions":
        fractions = estimate_fractions(cohort, plan)
        b_hat = weight_correction(cohort, omega, w, fit.theta_hat,
                                  weight_fn, plan, fractions)
        v0 = sampling_fraction_cov(fractions)
        report = corrected_variance(report, b_hat, v0)
        var_mat = report.sigma_star
    else:
        var_mat = report.sigma0

    flags = set(fit.flags) | set(report.flags)
    if var_mat is not report.sigma0 and np.diag(var_mat).min() <= 0.0:
        flags.add("sigma_star_nonpos_fallback")
        var_mat = report.sigma0
    ci = confidence_interval(fit.theta_hat, var_mat, level)
    covered = float(ci[0, 0] <= theta0 <= ci[0, 1])
    return ReplicateRow(
        theta_hat=float(fit.theta_hat[0]),
        var_used=float(var_mat[0, 0]),
        sigma0_var=float(report.sigma0[0, 0]),
        covered=covered,
        flags=tuple(sorted(flags)),
    )


def run_replicate(config: StudyConfig, replicate_index: int,
                  options: SolveOptions | None = None, level=0.95):
    """All requested (weight, method) fits on one replicate cohort.

    Failures inside one method become a flagged NaN row; they never abort
    the replicate.
    """
    if options is None:
        options = SolveOptions()
    wanted = set(config.methods)
    cohort = None
    cohort_full = None
    out = {}
    for method in METHODS:
        pairs = [wf for wf in WEIGHT_FNS if (wf, method) in wanted]
        if not pairs:
            continue
        if method == "full":
            if cohort_full is None:
                cohort_full = generate_cohort(config, replicate_index,
                                              full_information=True)
            coh = cohort_full
        else:
            if cohort is None:
                cohort = generate_cohort(config, replicate_index)
            coh = cohort
        plan = plan_for_method(method)
        try:
            omega, w = assign_weights(coh, plan)
            fit_g = solve_gehan(coh, omega, w, options)
        except RankAftError as exc:
            for wf in pairs:
                out[(wf, method)] = _failed_row(exc)
            continue
        for wf in pairs:
            try:
                if wf == "gehan":
                    fit = fit_g
                else:
                    fit = solve_logrank(coh, omega, w, options,
                                        seed_theta=fit_g.theta_hat)
                out[(wf, method)] = _fit_and_variance(
                    coh, plan, wf, fit, config.theta0, level)
            except RankAftError as exc:
                out[(wf, method)] = _failed_row(exc)
    return out


def _failed_row(exc):
    return ReplicateRow(
        theta_hat=math.nan, var_used=math.nan, sigma0_var=math.nan,
        covered=math.nan, flags=(f"error:{type(exc).__name__}",))


def _replicate_task(args):
    config, idx, options, level = args
    return idx, run_replicate(config, idx, options, level)


@dataclass(frozen=True)
class StudyRow:
    """One aggregated line of the report, mirroring the table layout."""

    alpha_fraction: float
    weight: str
    method: str
    bias: float
    emp_var: float
    ave_var: float
    coverage: float
    asym_var: float
    n_flagged: int


@dataclass(frozen=True)
class StudyReport:
    rows: tuple


def _asym_cohort(config: StudyConfig, asym_n, stream_index, method, cache):
    """Large cohort (full or two-phase view) shared across methods."""
    key = "full" if method == "full" else "phase2"
    if key not in cache:
        cache[key] = generate_cohort(
            replace(config, n=asym_n), stream_index,
            full_information=(key == "full"))
    return cache[key]


def _asymptotic_variance(config: StudyConfig, weight_fn, method,
                         big_cohort) -> float:
    """Plug-in sandwich variance at the true theta on one large cohort,
    rescaled to the study's n."""
    plan = plan_for_method(method)
    theta0 = np.array([config.theta0])
    omega, w = assign_weights(big_cohort, plan)
    contrib = influence_contributions(big_cohort, omega, w, theta0, weight_fn)
    slope = slope_matrix(big_cohort, omega, w, theta0, weight_fn)
    report = sandwich_variance(contrib, slope)
    var_mat = report.sigma0
    if plan.alpha_source == "estimated_fractions":
        fractions = estimate_fractions(big_cohort, plan)
        b_hat = weight_correction(big_cohort, omega, w, theta0, weight_fn,
                                  plan, fractions)
        v0 = sampling_fraction_cov(fractions)
        report = corrected_variance(report, b_hat, v0)
        var_mat = report.sigma_star
    return float(var_mat[0, 0]) * big_cohort.n / config.n


def run_study(config: StudyConfig, workers: int = 1,
              options: SolveOptions | None = None, level=0.95,
              asym_n: int = 200_000) -> StudyReport:
    """Full Monte Carlo study; the report is identical for any worker count.

    Each row aggregates finite replicates only: bias and empirical
    variance of the point estimates, the average of the variance
    estimator actually used for intervals, empirical coverage, the
    large-sample plug-in variance, and the count of flagged replicates.
    """
    if options is None:
        options = SolveOptions()
    tasks = [(config, idx, options, level)
             for idx in range(config.replications)]
    results: list = [None] * config.replications
    if workers <= 1:
        for args in tasks:
            idx, row = _replicate_task(args)
            results[idx] = row
    else:
        chunk = max(1, config.replications // (workers * 4))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for idx, row in pool.map(_replicate_task, tasks,
                                     chunksize=chunk):
                results[idx] = row

    big_cache: dict = {}
    rows = []
    for weight_fn, method in config.methods:
        key = (weight_fn, method)
        reps = [r[key] for r in results]
        theta = np.array([r.theta_hat for r in reps])
        var_used = np.array([r.var_used for r in reps])
        covered = np.array([r.covered for r in reps])
        n_flagged = sum(1 for r in reps if set(r.flags) - _BENIGN_FLAGS)
        valid = np.isfinite(theta) & np.isfinite(var_used)
        if valid.any():
            bias = float(theta[valid].mean() - config.theta0)
            emp_var = (float(np.var(theta[valid], ddof=1))
                       if valid.sum() > 1 else math.nan)
            ave_var = float(var_used[valid].mean())
            coverage = float(covered[valid].mean())
        else:
            bias = emp_var = ave_var = coverage = math.nan
        asym_var = _asymptotic_variance(
            config, weight_fn, method,
            _asym_cohort(config, asym_n, _BIG_COHORT_STREAM, method,
                         big_cache))
        rows.append(StudyRow(
            alpha_fraction=config.subcohort_fraction,
            weight=weight_fn, method=method, bias=bias, emp_var=emp_var,
            ave_var=ave_var, coverage=coverage, asym_var=asym_var,
            n_flagged=n_flagged))
    return StudyReport(rows=tuple(rows))


@dataclass(frozen=True)
class EfficiencyRow:
    fraction: float
    weight: str
    method: str
    asym_var: float
    rel_eff: float
    rel_eff_same_weight: float


@dataclass(frozen=True)
class EfficiencyCurve:
    rows: tuple


def efficiency_curve(config: StudyConfig, fractions,
                     asym_n: int = 200_000) -> EfficiencyCurve:
    """Asymptotic relative efficiency across subcohort fractions.

    For each fraction one large cohort is drawn and every requested
    (weight, method) pair gets its plug-in variance at the true theta.
    ``rel_eff`` benchmarks against the full-data logrank variance on the
    same cohort; ``rel_eff_same_weight`` against the same weight
    function's own full-data variance.  At fraction 1 every subject is
    selected with probability one, all weights collapse to the full-data
    ones, and both ratios are exactly 1.
    """
    fractions = [float(f) for f in fractions]
    if not fractions:
        raise ValidationError("fraction grid is empty")
    for f in fractions:
        if not 0.0 < f <= 1.0:
            raise ValidationError(f"fraction {f} outside (0, 1]")

    rows = []
    for k, frac in enumerate(fractions):
        cfg = replace(config, subcohort_fraction=frac)
        cache: dict = {}
        stream = _BIG_COHORT_STREAM + 1 + k
        needed = {("logrank", "full"), ("gehan", "full")}
        needed.update(cfg.methods)
        var = {}
        for weight_fn, method in sorted(needed):
            var[(weight_fn, method)] = _asymptotic_variance(
                cfg, weight_fn, method,
                _asym_cohort(cfg, asym_n, stream, method, cache))
        bench = var[("logrank", "full")]
        for weight_fn, method in cfg.methods:
            v = var[(weight_fn, method)]
            rows.append(EfficiencyRow(
                fraction=frac, weight=weight_fn, method=method,
                asym_var=v, rel_eff=bench / v,
                rel_eff_same_weight=var[(weight_fn, "full")] / v))
    return EfficiencyCurve(rows=tuple(rows))


def report_to_csv(report: StudyReport, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for row in report.rows:
            writer.writerow([
                repr(row.alpha_fraction), row.weight, row.method,
                repr(row.bias), repr(row.emp_var), repr(row.ave_var),
                repr(row.coverage), repr(row.asym_var), row.n_flagged])


def report_from_csv(path) -> StudyReport:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(REPORT_COLUMNS):
            raise ValidationError(
                f"report header {header!r} does not match {REPORT_COLUMNS}")
        for rec in reader:
            if not rec:
                continue
            rows.append(StudyRow(
                alpha_fraction=float(rec[0]), weight=rec[1], method=rec[2],
                bias=float(rec[3]), emp_var=float(rec[4]),
                ave_var=float(rec[5]), coverage=float(rec[6]),
                asym_var=float(rec[7]), n_flagged=int(rec[8])))
    return StudyReport(rows=tuple(rows))


def efficiency_to_csv(curve: EfficiencyCurve, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EFFICIENCY_COLUMNS)
        for row in curve.rows:
            writer.writerow([
                repr(row.fraction), row.weight, row.method,
                repr(row.asym_var), repr(row.rel_eff),
                repr(row.rel_eff_same_weight)])


def efficiency_from_csv(path) -> EfficiencyCurve:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(EFFICIENCY_COLUMNS):
            raise ValidationError(
                f"efficiency header {header!r} does not match "
                f"{EFFICIENCY_COLUMNS}")
        for rec in reader:
            if not rec:
                continue
            rows.append(EfficiencyRow(
                fraction=float(rec[0]), weight=rec[1], method=rec[2],
                asym_var=float(rec[3]), rel_eff=float(rec[4]),
                rel_eff_same_weight=float(rec[5])))
    return EfficiencyCurve(rows=tuple(rows))
