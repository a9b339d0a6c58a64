"""Sampling weight schemes for two-phase and case-cohort designs.

A :class:`WeightPlan` names one of four schemes and says whether selection
probabilities come from the design (``true_pi``, read off the cohort's
``pi`` column) or are estimated as per-stratum selected fractions.  The
plan resolves to a pair of weight vectors:

``omega``
    event-term weights, multiplying each event's contribution;
``w``
    risk weights, entering every at-risk sum.

Schemes
-------
full_data
    omega = W = 1 for everyone.
case_cohort_predictable
    W_i = 1(subcohort) / pi_i, omega = 1.  Never looks ahead at event
    status, so W is predictable with respect to the failure filtration.
case_cohort_nonpredictable
    omega = W = delta + (1 - delta) * 1(subcohort) / pi.  Cases count with
    weight one, censored subcohort members are inverse-weighted.
mar_inverse_prob
    omega = W = observed / pi, classical inverse probability of
    observation under missingness at random.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Cohort
from .errors import ValidationError

SCHEMES = (
    "full_data",
    "case_cohort_predictable",
    "case_cohort_nonpredictable",
    "mar_inverse_prob",
)
ALPHA_SOURCES = ("true_pi", "estimated_fractions")


@dataclass(frozen=True)
class WeightPlan:
    """How to build (omega, W) for a cohort."""

    scheme: str = "full_data"
    alpha_source: str = "true_pi"
    strata: tuple | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValidationError(
                f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.alpha_source not in ALPHA_SOURCES:
            raise ValidationError(
                f"unknown alpha_source {self.alpha_source!r}; "
                f"expected one of {ALPHA_SOURCES}")
        if self.strata is not None:
            object.__setattr__(self, "strata", tuple(self.strata))


@dataclass(frozen=True)
class SamplingFractions:
    """Per-stratum selected fractions and pool shares.

    ``alpha[s]`` is the fraction of the stratum's eligible pool that was
    selected; ``gamma[s]`` is the pool's share of the whole cohort, the
    scaling that makes the binomial variance of alpha comparable across
    strata of different sizes.
    """

    strata: tuple
    alpha: np.ndarray
    gamma: np.ndarray
    n_selected: np.ndarray
    n_pool: np.ndarray

    def lookup(self, labels, strict=True):
        """Map an array of stratum labels to estimated probabilities.

        Unknown labels raise when ``strict``; otherwise they map to NaN,
        which is the right behavior for subjects whose probability never
        enters a weight.
        """
        labels = np.asarray(labels)
        out = np.full(labels.shape, np.nan)
        seen = np.zeros(labels.shape, dtype=bool)
        for s, label in enumerate(self.strata):
            mask = labels == label
            out[mask] = self.alpha[s]
            seen |= mask
        if strict and not seen.all():
            missing = sorted(set(labels[~seen].tolist()))
            raise ValidationError(
                f"stratum labels {missing[:5]!r} not covered by the "
                "estimated fractions")
        return out


def _pool_mask(cohort: Cohort, scheme: str):
    """Eligible pool whose selected fraction defines alpha per stratum."""
    if scheme == "case_cohort_nonpredictable":
        # Only censored subjects are ever inverse-weighted.
        return cohort.delta == 0
    return np.ones(cohort.n, dtype=bool)


def _selected_mask(cohort: Cohort, scheme: str):
    if scheme == "mar_inverse_prob":
        return cohort.observed
    return cohort.in_subcohort


def estimate_fractions(cohort: Cohort, plan: WeightPlan) -> SamplingFractions:
    """Estimate per-stratum selection fractions from realized membership."""
    if plan.scheme == "full_data":
        raise ValidationError(
            "full_data has no sampling fractions to estimate")
    if cohort.stratum is None:
        raise ValidationError(
            "estimated fractions require a stratum column")
    pool = _pool_mask(cohort, plan.scheme)
    selected = _selected_mask(cohort, plan.scheme)

    if plan.strata is not None:
        strata = tuple(plan.strata)
    else:
        strata = tuple(np.unique(cohort.stratum[pool]).tolist())
    if not strata:
        raise ValidationError("no strata present in the eligible pool")

    n = cohort.n
    alpha = np.empty(len(strata))
    gamma = np.empty(len(strata))
    n_sel = np.empty(len(strata), dtype=int)
    n_pool = np.empty(len(strata), dtype=int)
    for s, label in enumerate(strata):
        mask = pool & (cohort.stratum == label)
        n_pool[s] = int(mask.sum())
        if n_pool[s] == 0:
            raise ValidationError(
                f"stratum {label!r} has an empty eligible pool")
        n_sel[s] = int((mask & selected).sum())
        if n_sel[s] == 0:
            raise ValidationError(
                f"stratum {label!r} has no selected subjects; "
                "estimated fraction would be zero")
        alpha[s] = n_sel[s] / n_pool[s]
        gamma[s] = n_pool[s] / n

    leftover = pool.copy()
    for label in strata:
        leftover &= cohort.stratum != label
    if leftover.any():
        extra = sorted(set(cohort.stratum[leftover].tolist()))
        raise ValidationError(
            f"pool subjects with stratum labels {extra[:5]!r} are outside "
            "the plan's strata")

    return SamplingFractions(
        strata=strata, alpha=alpha, gamma=gamma,
        n_selected=n_sel, n_pool=n_pool)


def _resolve_pi(cohort: Cohort, plan: WeightPlan, mask):
    """Selection probabilities for the subjects in mask."""
    if plan.alpha_source == "estimated_fractions":
        fractions = estimate_fractions(cohort, plan)
        pi = fractions.lookup(cohort.stratum, strict=False)
    else:
        if cohort.pi is None:
            raise ValidationError(
                f"scheme {plan.scheme!r} with true_pi requires a pi column")
        pi = cohort.pi
        fractions = None
    bad = np.flatnonzero(mask & ~np.isfinite(pi))
    if bad.size:
        raise ValidationError(
            f"missing pi where required, rows {bad.tolist()[:10]}")
    return pi, fractions


def assign_weights(cohort: Cohort, plan: WeightPlan):
    """Resolve a plan to the (omega, w) weight vectors."""
    n = cohort.n
    ones = np.ones(n)
    if plan.scheme == "full_data":
        return ones, ones.copy()

    sc = cohort.in_subcohort.astype(float)
    delta = cohort.delta.astype(float)

    if plan.scheme == "case_cohort_predictable":
        pi, _ = _resolve_pi(cohort, plan, cohort.in_subcohort)
        w = np.where(cohort.in_subcohort, sc / pi, 0.0)
        return ones, w

    if plan.scheme == "case_cohort_nonpredictable":
        needs_pi = (cohort.delta == 0) & cohort.in_subcohort
        pi, _ = _resolve_pi(cohort, plan, needs_pi)
        censored_part = np.where(needs_pi, sc / pi, 0.0)
        w = delta + (1.0 - delta) * censored_part
        return w.copy(), w

    # mar_inverse_prob
    pi, _ = _resolve_pi(cohort, plan, cohort.observed)
    obs = cohort.observed.astype(float)
    w = np.where(cohort.observed, obs / pi, 0.0)
    return w.copy(), w


def fraction_gradients(cohort: Cohort, plan: WeightPlan,
                       fractions: SamplingFractions):
    """Per-subject derivatives of the weights in the sampling fractions.

    Returns ``(wdot, omegadot)``, each of shape (n, S): column s is the
    partial derivative of the realized weight with respect to the stratum-s
    selection fraction, evaluated at the estimated fractions.  Weights that
    do not depend on the fractions (a fixed omega = 1, the case part of the
    nonpredictable weight) have zero derivative.
    """
    n = cohort.n
    S = len(fractions.strata)
    wdot = np.zeros((n, S))
    if cohort.stratum is None:
        raise ValidationError("fraction gradients require stratum labels")

    sc = cohort.in_subcohort.astype(float)
    for s, label in enumerate(fractions.strata):
        in_s = (cohort.stratum == label).astype(float)
        inv_sq = 1.0 / fractions.alpha[s] ** 2
        if plan.scheme == "case_cohort_predictable":
            wdot[:, s] = -sc * in_s * inv_sq
        elif plan.scheme == "case_cohort_nonpredictable":
            censored = (cohort.delta == 0).astype(float)
            wdot[:, s] = -censored * sc * in_s * inv_sq
        elif plan.scheme == "mar_inverse_prob":
            obs = cohort.observed.astype(float)
            wdot[:, s] = -obs * in_s * inv_sq
        else:
            raise ValidationError(
                f"scheme {plan.scheme!r} has no estimated fractions")

    if plan.scheme == "case_cohort_predictable":
        omegadot = np.zeros((n, S))
    else:
        omegadot = wdot.copy()
    return wdot, omegadot


def sampling_fraction_cov(fractions: SamplingFractions):
    """Scaled covariance of the estimated fractions.

    Diagonal, entry s equal to alpha_s * (1 - alpha_s) / gamma_s: the
    binomial variance of the stratum fraction rescaled so the whole-cohort
    sample size is the common normalizer.
    """
    v = fractions.alpha * (1.0 - fractions.alpha) / fractions.gamma
    return np.diag(v)
