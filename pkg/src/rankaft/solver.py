"""Root finding for the nonsmooth rank estimating equations.

The Gehan estimating function is the a.e. gradient of a convex piecewise
linear criterion, so each coordinate section is monotone nondecreasing and
sign-change bisection applies; the solution convention is the leftmost
point of the zero set, found as the infimum of the region where the
function is nonnegative.  The logrank function is not monotone, so it is
handled by direct norm minimization seeded at the Gehan solution, followed
by a deterministic local grid polish.

Exact roots need not exist: the functions are step functions.  A solution
is accepted when the scaled norm sqrt(n) * ||estfun|| is at most
``tol_psi_scaled``; otherwise the result carries a flag rather than an
error, since a step past zero is still the correct minimizer.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .data import Cohort
from .errors import SolverError
from .estimating import estfun, gehan_loss
from .riskset import _check_weights

_MAX_DOUBLINGS = 60


@dataclass(frozen=True)
class SolveOptions:
    """Tolerances and limits shared by both solvers.

    ``tol_theta`` is the bracket width at convergence, ``tol_psi_scaled``
    the acceptance threshold on sqrt(n) * ||estfun|| at the solution,
    ``search_radius`` the initial bracket half-width.
    """

    tol_theta: float = 1e-6
    tol_psi_scaled: float = 0.5
    max_iter: int = 200
    search_radius: float = 1.0


@dataclass(frozen=True)
class FitResult:
    """Solution of the estimating equation with diagnostics.

    ``flat_region`` is None or a tuple of per-coordinate (left, right)
    intervals where the criterion stays at its minimum beyond tolerance;
    right can be inf.  ``flags`` collects non-fatal conditions.
    """

    theta_hat: np.ndarray
    estfun_value: np.ndarray
    scaled_norm: float
    n_dropped: int
    flags: tuple
    flat_region: tuple | None
    trace: tuple


def _active_columns(cohort: Cohort, omega, w):
    """Check covariate variation among rows that can influence the fit."""
    active = (np.asarray(w) > 0) | ((np.asarray(omega) > 0)
                                    & (cohort.delta == 1))
    active &= cohort.observed
    if not active.any():
        raise SolverError("no subject carries any weight")
    zact = cohort.z[active]
    spread = zact.max(axis=0) - zact.min(axis=0)
    if (spread == 0).all():
        raise SolverError(
            "covariates are constant across all weighted subjects; "
            "the estimating function cannot identify theta")
    return spread


def solve_gehan(cohort: Cohort, omega, w, options: SolveOptions | None = None,
                start=None, min_risk_weight=1e-12) -> FitResult:
    """Solve the Gehan-weighted estimating equation.

    One covariate: monotone bisection to the leftmost zero.  Several:
    cyclic coordinate bisection, then a simplex polish on the convex
    criterion to escape corner stalls.
    """
    if options is None:
        options = SolveOptions()
    omega = _check_weights(omega, cohort.n, "omega")
    w = _check_weights(w, cohort.n, "w")
    _active_columns(cohort, omega, w)

    d = cohort.d
    trace: list = []
    flags: set = set()
    if start is None:
        theta = np.zeros(d)
    else:
        theta = np.atleast_1d(np.asarray(start, dtype=float)).copy()

    def component(j, base):
        def f(t):
            th = base.copy()
            th[j] = t
            return estfun(cohort, omega, w, th, "gehan",
                          min_risk_weight=min_risk_weight).value[j]
        return f

    if d == 1:
        f = component(0, theta)
        root = _monotone_leftmost_root(f, options, trace, flags)
        theta = np.array([root])
    else:
        for sweep in range(options.max_iter):
            move = 0.0
            for j in range(d):
                f = component(j, theta)
                root = _monotone_leftmost_root(f, options, trace, flags,
                                               center=theta[j])
                move = max(move, abs(root - theta[j]))
                theta[j] = root
            trace.append(("sweep", sweep, float(move)))
            if move <= options.tol_theta:
                break
        else:
            flags.add("max_iter_reached")
        theta = _polish_on_loss(cohort, omega, w, theta, options,
                                min_risk_weight, trace, flags)

    value = estfun(cohort, omega, w, theta, "gehan",
                   min_risk_weight=min_risk_weight)
    scaled = float(np.sqrt(cohort.n) * np.linalg.norm(value.value))
    if scaled > options.tol_psi_scaled:
        flags.add("scaled_norm_above_tol")
    flat = _flat_region(cohort, omega, w, theta, options, min_risk_weight,
                        flags)
    return FitResult(
        theta_hat=theta,
        estfun_value=value.value,
        scaled_norm=scaled,
        n_dropped=value.n_dropped,
        flags=tuple(sorted(flags)),
        flat_region=flat,
        trace=tuple(trace),
    )


def _monotone_leftmost_root(f, options, trace, flags, center=0.0):
    """Leftmost sign change of a nondecreasing step function.

    Maintains f(lo) < 0 <= f(hi) and bisects; the returned point is the
    ``hi`` end, the first point where the function is nonnegative.
    """
    r = options.search_radius
    lo, hi = center - r, center + r
    f_lo, f_hi = f(lo), f(hi)

    span = 2.0 * r
    for _ in range(_MAX_DOUBLINGS):
        if f_lo < 0:
            break
        lo -= span
        span *= 2.0
        f_lo = f(lo)
    else:
        raise SolverError(
            "no sign change: estimating function is nonnegative over "
            f"[{lo:.3g}, inf); data may not identify a finite minimizer")
    span = 2.0 * r
    for _ in range(_MAX_DOUBLINGS):
        if f_hi >= 0:
            break
        hi += span
        span *= 2.0
        f_hi = f(hi)
    else:
        raise SolverError(
            "no sign change: estimating function stays negative up to "
            f"{hi:.3g}; the criterion keeps decreasing")
    trace.append(("bracket", float(lo), float(hi)))

    iters = 0
    while hi - lo > options.tol_theta and iters < options.max_iter:
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
        iters += 1
    if hi - lo > options.tol_theta:
        flags.add("max_iter_reached")
    trace.append(("bisect", float(lo), float(hi), iters))
    return hi


def _polish_on_loss(cohort, omega, w, theta, options, min_risk_weight,
                    trace, flags):
    """Simplex descent on the convex criterion from the coordinate solution."""
    def loss(th):
        return gehan_loss(cohort, omega, w, th,
                          min_risk_weight=min_risk_weight)

    base = loss(theta)
    scale = max(10.0 * options.tol_theta, 1e-3)
    simplex = np.vstack([theta, theta + scale * np.eye(len(theta))])
    res = optimize.minimize(
        loss, theta, method="Nelder-Mead",
        options=dict(initial_simplex=simplex, xatol=0.1 * options.tol_theta,
                     fatol=0.0, maxiter=200 * len(theta), maxfev=400 * len(theta)))
    trace.append(("polish", float(base), float(res.fun)))
    if res.fun < base:
        if np.max(np.abs(res.x - theta)) > options.tol_theta:
            flags.add("coordinate_stall_polished")
        return np.asarray(res.x, dtype=float)
    return theta


def _flat_region(cohort, omega, w, theta, options, min_risk_weight, flags):
    """Per-coordinate extent of the criterion's minimizing plateau.

    Probes each coordinate from the solution outward, accepting points
    whose convex criterion matches the minimum to relative precision.
    Returns None when no interval is wider than ``tol_theta``.
    """
    def loss(th):
        return gehan_loss(cohort, omega, w, th,
                          min_risk_weight=min_risk_weight)

    d = len(theta)
    base = loss(theta)
    atol = 1e-12 * (1.0 + abs(base))
    rmax = options.search_radius * 2.0 ** 40
    intervals = []
    any_wide = False
    for j in range(d):
        ends = []
        for sign in (-1.0, 1.0):
            # Cheap pre-probe: a plateau wider than tol_theta must stay
            # flat one tolerance away, so a single increase rules it out.
            probe = theta.copy()
            probe[j] = theta[j] + sign * options.tol_theta
            if loss(probe) > base + atol:
                ends.append(theta[j])
                continue
            edge = theta[j]
            step = max(1.0, abs(theta[j]))
            unbounded = False
            for _ in range(_MAX_DOUBLINGS):
                cand = theta.copy()
                cand[j] = edge + sign * step
                if abs(cand[j]) > rmax:
                    unbounded = True
                    break
                if loss(cand) <= base + atol:
                    edge = cand[j]
                    step *= 2.0
                else:
                    break
            if unbounded:
                ends.append(sign * np.inf)
                continue
            while step > options.tol_theta:
                cand = theta.copy()
                cand[j] = edge + sign * step
                if abs(cand[j]) <= rmax and loss(cand) <= base + atol:
                    edge = cand[j]
                else:
                    step *= 0.5
            ends.append(edge)
        left, right = ends
        intervals.append((float(left), float(right)))
        if right - left > options.tol_theta:
            any_wide = True
        if np.isinf(left) or np.isinf(right):
            flags.add("unbounded_flat_region")
    if not any_wide:
        return None
    flags.add("flat_region")
    return tuple(intervals)


def solve_logrank(cohort: Cohort, omega, w, options: SolveOptions | None = None,
                  seed_theta=None, min_risk_weight=1e-12) -> FitResult:
    """Solve the logrank-weighted estimating equation.

    Minimizes the norm of the estimating function by simplex search from
    the Gehan solution (or a caller-supplied seed), with two offset
    restarts to catch distinct roots, then polishes on a deterministic
    local grid.  Disagreeing near-roots raise a non-uniqueness flag.
    """
    if options is None:
        options = SolveOptions()
    omega = _check_weights(omega, cohort.n, "omega")
    w = _check_weights(w, cohort.n, "w")
    _active_columns(cohort, omega, w)

    d = cohort.d
    trace: list = []
    flags: set = set()

    if seed_theta is None:
        try:
            seed = solve_gehan(cohort, omega, w, options,
                               min_risk_weight=min_risk_weight).theta_hat
        except SolverError:
            seed = np.zeros(d)
            flags.add("gehan_seed_failed")
    else:
        seed = np.atleast_1d(np.asarray(seed_theta, dtype=float))
    trace.append(("seed", tuple(float(v) for v in seed)))

    def qnorm(th):
        return float(np.linalg.norm(
            estfun(cohort, omega, w, th, "logrank",
                   min_risk_weight=min_risk_weight).value))

    offset = 0.5 * options.search_radius
    starts = [seed, seed - offset, seed + offset]
    candidates = []
    for x0 in starts:
        scale = max(0.25 * options.search_radius, 100.0 * options.tol_theta)
        simplex = np.vstack([x0, x0 + scale * np.eye(d)])
        res = optimize.minimize(
            qnorm, x0, method="Nelder-Mead",
            options=dict(initial_simplex=simplex,
                         xatol=0.1 * options.tol_theta, fatol=0.0,
                         maxiter=200 * d + 200, maxfev=400 * d + 400))
        candidates.append((np.asarray(res.x, dtype=float), float(res.fun)))
        trace.append(("start", tuple(float(v) for v in x0), float(res.fun)))

    root_tol = options.tol_psi_scaled / np.sqrt(cohort.n)
    roots = [c for c in candidates if c[1] <= root_tol]
    if len(roots) >= 2:
        locs = np.array([c[0] for c in roots])
        spread = locs.max(axis=0) - locs.min(axis=0)
        if (spread > options.tol_theta).any():
            flags.add("possible_nonunique_root")

    theta = min(candidates, key=lambda c: (c[1], tuple(c[0])))[0].copy()

    # Deterministic grid polish, coordinate by coordinate; leftmost wins
    # ties so reruns are reproducible.
    radius = 100.0 * options.tol_theta
    npts = 81
    for j in range(d):
        best_t, best_q = theta[j], qnorm(theta)
        for t in theta[j] + np.linspace(-radius, radius, npts):
            th = theta.copy()
            th[j] = t
            q = qnorm(th)
            if q < best_q or (q == best_q and t < best_t):
                best_t, best_q = t, q
        theta[j] = best_t
    trace.append(("polish", tuple(float(v) for v in theta)))

    value = estfun(cohort, omega, w, theta, "logrank",
                   min_risk_weight=min_risk_weight)
    scaled = float(np.sqrt(cohort.n) * np.linalg.norm(value.value))
    if scaled > options.tol_psi_scaled:
        flags.add("scaled_norm_above_tol")
    return FitResult(
        theta_hat=theta,
        estfun_value=value.value,
        scaled_norm=scaled,
        n_dropped=value.n_dropped,
        flags=tuple(sorted(flags)),
        flat_region=None,
        trace=tuple(trace),
    )
