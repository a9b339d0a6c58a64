"""Weighted risk sets over model residuals.

For a candidate coefficient vector the residual of subject i is
``y_i - theta @ z_i``.  The risk set at a point t is everyone whose
residual is >= t, ties included.  All summaries are weighted by the
per-subject risk weights W and scaled by 1/n:

    weight_at(t)  = (1/n) * sum_j W_j * 1(eps_j >= t)
    covsum_at(t)  = (1/n) * sum_j W_j * 1(eps_j >= t) * z_j
    mean_at(t)    = covsum_at(t) / weight_at(t)
    fraction_at(t) = weight_at(t) / mean(W)

``mean_at`` is the weighted covariate average among those still at risk
and ``fraction_at`` the weighted share of the cohort still at risk (the
Gehan weight function).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Cohort
from .errors import EmptyRiskSetError, ValidationError


def as_theta(theta, d):
    """Coerce theta to a float vector of length d."""
    arr = np.atleast_1d(np.asarray(theta, dtype=float))
    if arr.shape != (d,):
        raise ValidationError(
            f"theta has shape {arr.shape}, expected ({d},)")
    if not np.isfinite(arr).all():
        raise ValidationError("theta contains nonfinite entries")
    return arr


def compute_residuals(cohort: Cohort, theta, omega=None, w=None):
    """Residuals y - theta @ z for every subject.

    Subjects with unobserved covariates get the residual computed from y
    alone; that is only sound when their covariates can never enter any
    weighted sum, so when ``omega``/``w`` are supplied the function raises
    if an unobserved subject carries weight (nonzero W, or nonzero omega on
    an event).
    """
    theta = as_theta(theta, cohort.d)
    if omega is not None or w is not None:
        check_covariate_use(cohort, omega, w)
    zfill = np.where(cohort.observed[:, None], cohort.z, 0.0)
    return cohort.y - zfill @ theta


def check_covariate_use(cohort: Cohort, omega=None, w=None):
    """Raise if a subject with unobserved covariates carries weight."""
    needed = np.zeros(cohort.n, dtype=bool)
    if w is not None:
        needed |= np.asarray(w) != 0
    if omega is not None:
        needed |= (np.asarray(omega) != 0) & (cohort.delta == 1)
    bad = np.flatnonzero(needed & ~cohort.observed)
    if bad.size:
        raise ValidationError(
            "unobserved covariates required: subjects "
            f"{bad.tolist()[:10]} have nonzero weight but no covariate data")


def _check_weights(w, n, name="w"):
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.shape != (n,):
        raise ValidationError(f"{name} has shape {w.shape}, expected ({n},)")
    if not np.isfinite(w).all():
        raise ValidationError(f"{name} contains nonfinite entries")
    if (w < 0).any():
        raise ValidationError(f"{name} contains negative entries")
    return w


@dataclass(frozen=True)
class RiskSetStats:
    """Sorted residuals with suffix-summed risk weights.

    ``residuals`` is ascending over the whole cohort.  ``w_at_risk[k]`` and
    ``wz_at_risk[k]`` are the 1/n-scaled weighted sums over positions
    k..n-1; with tied residuals only the first position of a tie block is
    the value of the risk-set sum at that residual, which is what the
    ``*_at`` lookups return.  ``w_mean`` is sum(W)/n.
    """

    residuals: np.ndarray
    w_at_risk: np.ndarray
    wz_at_risk: np.ndarray
    w_mean: float
    n: int

    def _index(self, t):
        return np.searchsorted(self.residuals, t, side="left")

    def weight_at(self, t):
        """Scaled weight still at risk at t (0.0 past the largest residual)."""
        idx = self._index(t)
        padded = np.concatenate([self.w_at_risk, [0.0]])
        return padded[idx] if np.ndim(t) else float(padded[idx])

    def covsum_at(self, t):
        padded = np.vstack([self.wz_at_risk, np.zeros(self.wz_at_risk.shape[1])])
        out = padded[self._index(t)]
        return out

    def mean_at(self, t, min_risk_weight=1e-12):
        """Weighted covariate mean among subjects still at risk at t."""
        d0 = self.weight_at(t)
        if np.ndim(d0) == 0:
            if d0 < min_risk_weight:
                raise EmptyRiskSetError(
                    f"risk-set weight {d0:.3g} at t={t:g} is below "
                    f"{min_risk_weight:g}")
            return self.covsum_at(t) / d0
        if (np.asarray(d0) < min_risk_weight).any():
            raise EmptyRiskSetError("risk-set weight below floor")
        return self.covsum_at(t) / np.asarray(d0)[:, None]

    def fraction_at(self, t):
        """Weighted fraction of the cohort still at risk at t."""
        return self.weight_at(t) / self.w_mean


def risk_set_stats(cohort: Cohort, w, theta, omega=None) -> RiskSetStats:
    """Build suffix-summed risk-set statistics at a candidate theta."""
    w = _check_weights(w, cohort.n)
    if not (w > 0).any():
        raise ValidationError("all risk weights are zero")
    eps = compute_residuals(cohort, theta, omega=omega, w=w)
    order = np.argsort(eps, kind="stable")
    eps_s = eps[order]
    w_s = w[order]
    zfill = np.where(cohort.observed[:, None], cohort.z, 0.0)
    z_s = zfill[order]
    n = cohort.n
    d0 = np.cumsum(w_s[::-1])[::-1] / n
    d1 = np.cumsum((w_s[:, None] * z_s)[::-1], axis=0)[::-1] / n
    return RiskSetStats(
        residuals=eps_s,
        w_at_risk=d0,
        wz_at_risk=d1,
        w_mean=float(w_s.sum() / n),
        n=n,
    )


def risk_set_mean(stats: RiskSetStats, t, min_risk_weight=1e-12):
    """Weighted at-risk covariate mean at t."""
    return stats.mean_at(t, min_risk_weight=min_risk_weight)


def risk_set_fraction(stats: RiskSetStats, t):
    """Weighted at-risk fraction at t (Gehan weight)."""
    return stats.fraction_at(t)


def brute_force_risk_stats(cohort: Cohort, w, theta, t):
    """Direct-definition risk sums at one point, for cross-checking.

    Returns the pair (weight_at(t), covsum_at(t)) computed straight from
    the definition without sorting or suffix sums.
    """
    w = _check_weights(w, cohort.n)
    eps = compute_residuals(cohort, theta, w=w)
    at_risk = eps >= t
    zfill = np.where(cohort.observed[:, None], cohort.z, 0.0)
    d0 = float((w * at_risk).sum() / cohort.n)
    d1 = (w * at_risk) @ zfill / cohort.n
    return d0, d1
