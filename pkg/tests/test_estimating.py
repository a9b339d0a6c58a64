import numpy as np
import pytest

from rankaft import (Cohort, ValidationError, WeightPlan, estfun,
                     estfun_from_plan, estfun_pairwise, gehan_loss)

from conftest import random_cohort, random_weights


def test_two_subject_frozen_value():
    # Events at residuals 1 and 2 with z = 0, 1 and unit weights.
    # At eps = 1: rho = 1, at-risk mean 1/2, term z1 - 1/2 = -1/2.
    # At eps = 2: rho = 1/2, at-risk mean 1, term 0.
    # Dividing the sum by n = 2 gives -1/4.
    c = Cohort([1.0, 2.0], [1, 1], [0.0, 1.0])
    one = np.ones(2)
    out = estfun(c, one, one, [0.0], "gehan")
    np.testing.assert_allclose(out.value, [-0.25], atol=1e-15)
    assert out.n_event_terms == 2 and out.n_dropped == 0
    # Far on the other side the sign flips.
    np.testing.assert_allclose(estfun(c, one, one, [2.0]).value, [0.25],
                               atol=1e-15)


def test_three_subject_frozen_values():
    # Tie block at 2 with one censored subject inside it.
    # Events: subject 0 (eps 1, z 1) and subject 2 (eps 2, z 1).
    # At 1: rho = 1, mean = 2/3.  At 2: rho = 2/3, mean = 1/2.
    c = Cohort([1.0, 2.0, 2.0], [1, 0, 1], [1.0, 0.0, 1.0])
    one = np.ones(3)
    lr = estfun(c, one, one, [0.0], "logrank")
    np.testing.assert_allclose(lr.value, [5.0 / 18.0], atol=1e-15)
    ge = estfun(c, one, one, [0.0], "gehan")
    np.testing.assert_allclose(ge.value, [2.0 / 9.0], atol=1e-15)


def test_matches_pairwise_oracle():
    rng = np.random.default_rng(42)
    for k in range(200):
        c = random_cohort(rng, max_n=80)
        omega, w = random_weights(rng, c.n)
        theta = rng.normal(0.0, 1.0, c.d)
        wf = "gehan" if k % 2 == 0 else "logrank"
        fast = estfun(c, omega, w, theta, wf)
        slow = estfun_pairwise(c, omega, w, theta, wf)
        np.testing.assert_allclose(fast.value, slow.value, atol=1e-10)
        assert fast.n_event_terms == slow.n_event_terms
        assert fast.n_dropped == slow.n_dropped


def test_loss_gradient_matches_estfun():
    # Away from residual ties the criterion is linear, so a central
    # difference recovers the estimating function exactly up to rounding.
    rng = np.random.default_rng(99)
    checked = 0
    for _ in range(200):
        c = random_cohort(rng, max_n=60)
        omega, w = random_weights(rng, c.n)
        theta = rng.normal(0.0, 1.0, c.d)
        h = 1e-7
        for j in range(c.d):
            up = theta.copy()
            up[j] += h
            down = theta.copy()
            down[j] -= h
            f_up = estfun(c, omega, w, up, "gehan").value
            f_down = estfun(c, omega, w, down, "gehan").value
            if not np.array_equal(f_up, f_down):
                continue    # a knot sits inside the step
            fd = (gehan_loss(c, omega, w, up)
                  - gehan_loss(c, omega, w, down)) / (2.0 * h)
            assert abs(fd - f_up[j]) <= 1e-6
            checked += 1
    assert checked >= 100


def test_gehan_monotone_in_theta():
    # The Gehan function is the gradient of a convex criterion, so
    # (psi(t1) - psi(t2)) . (t1 - t2) >= 0 for every pair.
    rng = np.random.default_rng(3)
    for _ in range(100):
        c = random_cohort(rng, max_n=60)
        omega, w = random_weights(rng, c.n)
        t1 = rng.normal(0.0, 2.0, c.d)
        t2 = rng.normal(0.0, 2.0, c.d)
        p1 = estfun(c, omega, w, t1, "gehan").value
        p2 = estfun(c, omega, w, t2, "gehan").value
        dot = float((p1 - p2) @ (t1 - t2))
        assert dot >= -1e-10 * (1.0 + np.abs(p1).max() + np.abs(p2).max())


def test_dropped_terms_are_counted():
    # The largest residual belongs to an event whose risk set carries no
    # weight, so its term is dropped, not evaluated as 0/0.
    c = Cohort([1.0, 2.0, 3.0], [1, 0, 1], [0.0, 1.0, 1.0])
    omega = np.ones(3)
    w = np.array([1.0, 1.0, 0.0])
    out = estfun(c, omega, w, [0.0], "gehan")
    assert out.n_event_terms == 1
    assert out.n_dropped == 1
    slow = estfun_pairwise(c, omega, w, [0.0], "gehan")
    np.testing.assert_allclose(out.value, slow.value, atol=1e-14)
    assert slow.n_dropped == 1
    # The loss drops exactly the same terms; its gradient still matches.
    h = 1e-7
    fd = (gehan_loss(c, omega, w, [h]) - gehan_loss(c, omega, w, [-h])) / (2 * h)
    assert abs(fd - out.value[0]) <= 1e-6


def test_zero_omega_silences_events():
    c = Cohort([1.0, 2.0], [1, 1], [0.0, 1.0])
    out = estfun(c, [0.0, 0.0], np.ones(2), [0.0])
    np.testing.assert_array_equal(out.value, [0.0])
    assert out.n_event_terms == 0


def test_input_validation():
    c = Cohort([1.0, 2.0], [1, 1], [0.0, 1.0])
    one = np.ones(2)
    with pytest.raises(ValidationError):
        estfun(c, one, one, [0.0], "wilcoxon")
    with pytest.raises(ValidationError):
        estfun(c, [1.0], one, [0.0])
    with pytest.raises(ValidationError):
        estfun(c, one, [-1.0, 1.0], [0.0])
    with pytest.raises(ValidationError):
        estfun(c, one, [0.0, 0.0], [0.0])
    with pytest.raises(ValidationError):
        estfun(c, one, one, [0.0, 1.0])


def test_estfun_from_plan():
    c = Cohort([1.0, 2.0, 3.0, 4.0], [1, 0, 1, 0], [0.0, 1.0, 1.0, 0.0],
               in_subcohort=[True, True, False, False],
               pi=[0.5, 0.5, 0.5, 0.5])
    plan = WeightPlan("case_cohort_nonpredictable")
    from rankaft import assign_weights
    omega, w = assign_weights(c, plan)
    direct = estfun(c, omega, w, [0.3], "logrank")
    via_plan = estfun_from_plan(c, plan, [0.3], "logrank")
    np.testing.assert_array_equal(via_plan.value, direct.value)
