# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementation of the rank estimating-function kernel.

Twin of ``rankaft._kernel_py``; see that module for the contract.  Results
agree with the numpy version up to floating-point summation order.
"""
import numpy as np

KERNEL_NAME = "compiled"


def estfun_core(eps_sorted, z_sorted, w_sorted, ev_eps, ev_z, ev_omega,
                gehan, min_d0, want_loss):
    cdef double[::1] eps = np.ascontiguousarray(eps_sorted, dtype=np.float64)
    cdef double[:, ::1] z = np.ascontiguousarray(z_sorted, dtype=np.float64)
    cdef double[::1] w = np.ascontiguousarray(w_sorted, dtype=np.float64)
    cdef double[::1] e_eps = np.ascontiguousarray(ev_eps, dtype=np.float64)
    cdef double[:, ::1] e_z = np.ascontiguousarray(ev_z, dtype=np.float64)
    cdef double[::1] e_om = np.ascontiguousarray(ev_omega, dtype=np.float64)
    cdef bint is_gehan = bool(gehan)
    cdef bint with_loss = bool(want_loss)
    cdef double floor = min_d0

    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t d = z.shape[1]
    cdef Py_ssize_t m = e_eps.shape[0]
    psi_arr = np.zeros(d)
    if m == 0:
        return psi_arr, 0.0, 0, 0

    s0_arr = np.zeros(n + 1)
    s1_arr = np.zeros((n + 1, d))
    se_arr = np.zeros(n + 1)
    cdef double[::1] s0 = s0_arr
    cdef double[:, ::1] s1 = s1_arr
    cdef double[::1] se = se_arr
    cdef double[::1] psi = psi_arr

    cdef Py_ssize_t k, j, i, lo, hi, mid, idx
    for k in range(n - 1, -1, -1):
        s0[k] = s0[k + 1] + w[k]
        for j in range(d):
            s1[k, j] = s1[k + 1, j] + w[k] * z[k, j]
        if with_loss:
            se[k] = se[k + 1] + w[k] * eps[k]
    cdef double sum_w = s0[0]
    cdef double cutoff = n * floor

    cdef double loss = 0.0
    cdef double om, s0i, ei
    cdef Py_ssize_t n_terms = 0
    for i in range(m):
        ei = e_eps[i]
        lo = 0
        hi = n
        while lo < hi:
            mid = (lo + hi) // 2
            if eps[mid] < ei:
                lo = mid + 1
            else:
                hi = mid
        idx = lo
        s0i = s0[idx]
        if s0i < cutoff:
            continue
        n_terms += 1
        om = e_om[i]
        if is_gehan:
            for j in range(d):
                psi[j] += om * (e_z[i, j] * s0i - s1[idx, j]) / sum_w
        else:
            for j in range(d):
                psi[j] += om * (e_z[i, j] - s1[idx, j] / s0i)
        if with_loss:
            loss += om * (se[idx] - ei * s0i)

    for j in range(d):
        psi[j] /= n
    if with_loss:
        loss /= n * sum_w
    return psi_arr, loss, n_terms, m - n_terms
