"""Doubly weighted rank estimating function and Gehan convex criterion.

Each event contributes its covariate centered at the weighted at-risk
mean, scaled by a weight function (``gehan``: the weighted at-risk
fraction; ``logrank``: 1) and by the event weight omega:

    estfun(theta) = (1/n) * sum_{events i} omega_i * rho(eps_i)
                    * (z_i - mean_at(eps_i))

The risk weights W enter through the at-risk sums.  Under Gehan weighting
this is, up to sign, the exact a.e. gradient of the convex criterion
returned by :func:`gehan_loss`:

    loss(theta) = (1/(n*sum(W))) * sum_i sum_j omega_i * W_j
                  * 1(delta_i = 1) * max(eps_j - eps_i, 0)

Event terms whose risk set carries (scaled) weight below
``min_risk_weight`` are dropped and counted, never silently zeroed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .data import Cohort
from .errors import ValidationError
from .riskset import as_theta, check_covariate_use, _check_weights

WEIGHT_FUNCTIONS = ("gehan", "logrank")


@dataclass(frozen=True)
class EstFunValue:
    """Estimating-function value with dropped-term bookkeeping."""

    value: np.ndarray
    n_event_terms: int
    n_dropped: int


def _check_weight_fn(weight_fn):
    if weight_fn not in WEIGHT_FUNCTIONS:
        raise ValidationError(
            f"unknown weight function {weight_fn!r}; "
            f"expected one of {WEIGHT_FUNCTIONS}")


def _prepare(cohort: Cohort, omega, w, theta):
    """Validate inputs and lay out sorted arrays for the kernel."""
    n = cohort.n
    omega = _check_weights(omega, n, "omega")
    w = _check_weights(w, n, "w")
    if not (w > 0).any():
        raise ValidationError("all risk weights are zero")
    theta = as_theta(theta, cohort.d)
    check_covariate_use(cohort, omega, w)

    zfill = np.where(cohort.observed[:, None], cohort.z, 0.0)
    eps = cohort.y - zfill @ theta
    order = np.argsort(eps, kind="stable")
    eps_s = np.ascontiguousarray(eps[order])
    z_s = np.ascontiguousarray(zfill[order])
    w_s = np.ascontiguousarray(w[order])

    ev_mask = (cohort.delta[order] == 1) & (omega[order] != 0)
    ev_eps = np.ascontiguousarray(eps_s[ev_mask])
    ev_z = np.ascontiguousarray(z_s[ev_mask])
    ev_omega = np.ascontiguousarray(omega[order][ev_mask])
    return eps_s, z_s, w_s, ev_eps, ev_z, ev_omega


def estfun(cohort: Cohort, omega, w, theta, weight_fn="gehan",
           min_risk_weight=1e-12) -> EstFunValue:
    """Evaluate the weighted rank estimating function at theta."""
    _check_weight_fn(weight_fn)
    eps_s, z_s, w_s, ev_eps, ev_z, ev_omega = _prepare(cohort, omega, w, theta)
    psi, _, kept, dropped = backend.estfun_core(
        eps_s, z_s, w_s, ev_eps, ev_z, ev_omega,
        weight_fn == "gehan", min_risk_weight, False)
    return EstFunValue(value=psi, n_event_terms=kept, n_dropped=dropped)


def gehan_loss(cohort: Cohort, omega, w, theta, min_risk_weight=1e-12):
    """Convex criterion whose a.e. gradient is estfun(..., 'gehan').

    Dropped event terms match :func:`estfun` exactly, so finite differences
    of this loss agree with the estimating function away from ties.
    """
    eps_s, z_s, w_s, ev_eps, ev_z, ev_omega = _prepare(cohort, omega, w, theta)
    _, loss, _, _ = backend.estfun_core(
        eps_s, z_s, w_s, ev_eps, ev_z, ev_omega,
        True, min_risk_weight, True)
    return loss


def estfun_pairwise(cohort: Cohort, omega, w, theta, weight_fn="gehan",
                    min_risk_weight=1e-12) -> EstFunValue:
    """Direct O(n^2) evaluation straight from the definition.

    Reference implementation used to cross-check the fast kernel; no
    sorting, no suffix sums.  Gehan weighting reduces to the pairwise form

        (1/(n*sum(W))) * sum_i sum_j omega_i * W_j * 1(delta_i = 1)
        * 1(eps_j >= eps_i) * (z_i - z_j)
    """
    _check_weight_fn(weight_fn)
    n = cohort.n
    omega = _check_weights(omega, n, "omega")
    w = _check_weights(w, n, "w")
    if not (w > 0).any():
        raise ValidationError("all risk weights are zero")
    theta = as_theta(theta, cohort.d)
    check_covariate_use(cohort, omega, w)

    zfill = np.where(cohort.observed[:, None], cohort.z, 0.0)
    eps = cohort.y - zfill @ theta
    sum_w = w.sum()
    total = np.zeros(cohort.d)
    kept = 0
    dropped = 0
    for i in range(n):
        if cohort.delta[i] != 1 or omega[i] == 0:
            continue
        at_risk = eps >= eps[i]
        den = float((w * at_risk).sum())
        if den / n < min_risk_weight:
            dropped += 1
            continue
        kept += 1
        if weight_fn == "gehan":
            diff = (w * at_risk) @ (zfill[i] - zfill)
            total += omega[i] * diff / sum_w
        else:
            mean = (w * at_risk) @ zfill / den
            total += omega[i] * (zfill[i] - mean)
    return EstFunValue(value=total / n, n_event_terms=kept, n_dropped=dropped)


def estfun_from_plan(cohort: Cohort, plan, theta, weight_fn="gehan",
                     min_risk_weight=1e-12) -> EstFunValue:
    """Evaluate the estimating function with weights resolved from a plan.

    Convenience wrapper: assigns the (omega, W) pair the plan prescribes,
    estimating stratum sampling fractions from the data when the plan asks
    for it, then evaluates :func:`estfun`.
    """
    from .weights import assign_weights

    omega, w = assign_weights(cohort, plan)
    return estfun(cohort, omega, w, theta, weight_fn=weight_fn,
                  min_risk_weight=min_risk_weight)
