"""Shared generators for randomized property tests.

Instances are deliberately rough: tied observation times, exact zero
weights, binary and continuous covariates, and subjects that carry no
weight at all.  Everything is driven by a caller-supplied Generator so
each test controls its own seed.
"""
import numpy as np

from rankaft import Cohort


def random_cohort(rng, max_n=200, d=None, tie_frac=0.5):
    """Random right-censored cohort with frequent ties."""
    n = int(rng.integers(5, max_n + 1))
    if d is None:
        d = int(rng.integers(1, 4))
    if rng.random() < tie_frac:
        # Coarse grid of times so tie blocks are common.
        y = rng.integers(0, max(3, n // 4), n).astype(float)
    else:
        y = rng.normal(0.0, 2.0, n)
    delta = (rng.random(n) < 0.6).astype(int)
    if not delta.any():
        delta[int(rng.integers(n))] = 1
    if rng.random() < 0.5:
        z = rng.normal(0.0, 1.0, (n, d))
    else:
        z = (rng.random((n, d)) < 0.4).astype(float)
    return Cohort(y, delta, z)


def random_weights(rng, n, zero_frac=0.25):
    """Nonnegative (omega, w) pairs with exact zeros mixed in."""
    w = rng.uniform(0.2, 3.0, n)
    w[rng.random(n) < zero_frac] = 0.0
    if not (w > 0).any():
        w[int(rng.integers(n))] = 1.0
    omega = rng.uniform(0.2, 3.0, n)
    omega[rng.random(n) < zero_frac] = 0.0
    return omega, w
