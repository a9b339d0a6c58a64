"""Weighted rank estimation for accelerated failure time models.

Point estimates solve a monotone rank-based estimating equation under
double inverse-probability weighting, covering full cohorts, stratified
case-cohort designs with predictable or nonpredictable weights, and
covariates missing at random.  Variance estimates combine an influence
function sandwich with an additive correction for estimated sampling
fractions, and a Monte Carlo engine reproduces the operating
characteristics of all five weighting methods.
"""
from .backend import available_kernels, kernel_name
from .data import (Cohort, Subject, TransformSpec, ValidationPolicy,
                   Violation, read_cohort_csv, validate_cohort)
from .errors import (EmptyRiskSetError, NumericError, RankAftError,
                     SingularSlopeError, SolverError, ValidationError)
from .estimating import (EstFunValue, estfun, estfun_from_plan,
                         estfun_pairwise, gehan_loss)
from .riskset import (RiskSetStats, compute_residuals, risk_set_fraction,
                      risk_set_mean, risk_set_stats)
from .solver import FitResult, SolveOptions, solve_gehan, solve_logrank
from .study import (EfficiencyCurve, EfficiencyRow, ReplicateRow,
                    StudyConfig, StudyReport, StudyRow, allocation_probs,
                    calibrate_censoring, config_from_dict, config_to_dict,
                    efficiency_curve, efficiency_from_csv,
                    efficiency_to_csv, generate_cohort, plan_for_method,
                    report_from_csv, report_to_csv, run_replicate,
                    run_study)
from .variance import (HazardEstimate, VarianceReport, confidence_interval,
                       corrected_variance, cum_hazard,
                       influence_contributions, sandwich_variance,
                       slope_matrix, weight_correction)
from .weights import (ALPHA_SOURCES, SCHEMES, SamplingFractions, WeightPlan,
                      assign_weights, estimate_fractions,
                      fraction_gradients, sampling_fraction_cov)

__version__ = "0.1.0"

__all__ = [
    "ALPHA_SOURCES", "Cohort", "EfficiencyCurve", "EfficiencyRow",
    "EmptyRiskSetError", "EstFunValue", "FitResult", "HazardEstimate",
    "NumericError", "RankAftError", "ReplicateRow", "RiskSetStats",
    "SCHEMES", "SamplingFractions", "SingularSlopeError", "SolveOptions",
    "SolverError", "StudyConfig", "StudyReport", "StudyRow", "Subject",
    "TransformSpec", "ValidationError", "ValidationPolicy",
    "VarianceReport", "Violation", "WeightPlan", "allocation_probs",
    "assign_weights", "available_kernels", "calibrate_censoring",
    "compute_residuals", "confidence_interval", "config_from_dict",
    "config_to_dict", "corrected_variance", "cum_hazard",
    "efficiency_curve", "efficiency_from_csv", "efficiency_to_csv",
    "estfun", "estfun_from_plan", "estfun_pairwise", "estimate_fractions",
    "fraction_gradients", "gehan_loss", "generate_cohort",
    "influence_contributions", "kernel_name", "plan_for_method",
    "read_cohort_csv", "report_from_csv", "report_to_csv",
    "risk_set_fraction", "risk_set_mean", "risk_set_stats",
    "run_replicate", "run_study", "sampling_fraction_cov",
    "sandwich_variance", "slope_matrix", "solve_gehan", "solve_logrank",
    "validate_cohort", "weight_correction",
]
