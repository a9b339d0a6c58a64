"""Numpy implementation of the rank estimating-function kernel.

This is the fallback twin of the compiled extension ``rankaft._kernel``.
Both expose ``estfun_core`` with identical semantics; results agree up to
floating-point summation order.
"""
import numpy as np

KERNEL_NAME = "python"


def estfun_core(eps_sorted, z_sorted, w_sorted, ev_eps, ev_z, ev_omega,
                gehan, min_d0, want_loss):
    """Evaluate the weighted rank estimating function on presorted data.

    Parameters
    ----------
    eps_sorted : (n,) float64, ascending residuals for the whole cohort.
    z_sorted, w_sorted : covariates and risk weights in the same order.
    ev_eps, ev_z, ev_omega : residuals, covariates and event weights of the
        event terms (all events with nonzero omega), in ascending residual
        order.
    gehan : bool, True for Gehan weighting, False for logrank.
    min_d0 : float, floor on the scaled risk-set weight below which an
        event term is dropped as having an empty risk set.
    want_loss : bool, also accumulate the Gehan convex criterion.

    Returns
    -------
    psi : (d,) float64
    loss : float (0.0 unless ``want_loss``)
    n_terms : int, event terms kept
    n_dropped : int, event terms dropped for empty risk sets
    """
    n, d = z_sorted.shape
    m = ev_eps.shape[0]
    if m == 0:
        return np.zeros(d), 0.0, 0, 0

    # Suffix sums over the cohort: position k holds the sum over j >= k.
    s0 = np.zeros(n + 1)
    s0[:n] = np.cumsum(w_sorted[::-1])[::-1]
    s1 = np.zeros((n + 1, d))
    s1[:n] = np.cumsum((w_sorted[:, None] * z_sorted)[::-1], axis=0)[::-1]
    sum_w = s0[0]

    idx = np.searchsorted(eps_sorted, ev_eps, side="left")
    s0_ev = s0[idx]
    keep = s0_ev >= n * min_d0
    n_terms = int(keep.sum())
    n_dropped = m - n_terms

    psi = np.zeros(d)
    loss = 0.0
    if n_terms:
        idx_k = idx[keep]
        s0_k = s0_ev[keep]
        om_k = ev_omega[keep]
        z_k = ev_z[keep]
        if gehan:
            terms = om_k[:, None] * (z_k * s0_k[:, None] - s1[idx_k]) / sum_w
        else:
            terms = om_k[:, None] * (z_k - s1[idx_k] / s0_k[:, None])
        psi = terms.sum(axis=0) / n
        if want_loss:
            se = np.zeros(n + 1)
            se[:n] = np.cumsum((w_sorted * eps_sorted)[::-1])[::-1]
            loss = float(
                (om_k * (se[idx_k] - ev_eps[keep] * s0_k)).sum()
            ) / (n * sum_w)
    return psi, loss, n_terms, n_dropped
