import numpy as np
import pytest

from rankaft import (Cohort, ValidationError, WeightPlan, assign_weights,
                     estimate_fractions, fraction_gradients,
                     sampling_fraction_cov)
from rankaft.weights import SamplingFractions


def _cohort(**kw):
    base = dict(
        y=[1.0, 2.0, 3.0, 4.0],
        delta=[1, 0, 0, 1],
        z=[0.0, 1.0, 0.0, 1.0],
    )
    base.update(kw)
    return Cohort(**base)


def test_plan_validation():
    with pytest.raises(ValidationError):
        WeightPlan("bootstrap")
    with pytest.raises(ValidationError):
        WeightPlan("full_data", alpha_source="guess")
    plan = WeightPlan("full_data", strata=[0, 1])
    assert plan.strata == (0, 1)


def test_full_data_weights():
    omega, w = assign_weights(_cohort(), WeightPlan("full_data"))
    np.testing.assert_array_equal(omega, np.ones(4))
    np.testing.assert_array_equal(w, np.ones(4))


def test_predictable_weights():
    c = _cohort(in_subcohort=[True, True, False, False],
                pi=[0.5, 0.25, np.nan, np.nan])
    omega, w = assign_weights(c, WeightPlan("case_cohort_predictable"))
    np.testing.assert_array_equal(omega, np.ones(4))
    np.testing.assert_allclose(w, [2.0, 4.0, 0.0, 0.0])
    # NaN pi outside the subcohort is fine; on a member it is not.
    c_bad = _cohort(in_subcohort=[True, True, False, False],
                    pi=[0.5, np.nan, np.nan, np.nan])
    with pytest.raises(ValidationError, match="missing pi"):
        assign_weights(c_bad, WeightPlan("case_cohort_predictable"))
    with pytest.raises(ValidationError, match="requires a pi column"):
        assign_weights(_cohort(in_subcohort=[True, False, False, False]),
                       WeightPlan("case_cohort_predictable"))


def test_nonpredictable_weights():
    # Cases keep weight one whether sampled or not; a censored subcohort
    # member with pi = 0.25 carries 4.0 in both omega and W.
    c = _cohort(in_subcohort=[False, True, False, True],
                pi=[np.nan, 0.25, np.nan, 0.5])
    omega, w = assign_weights(c, WeightPlan("case_cohort_nonpredictable"))
    np.testing.assert_allclose(w, [1.0, 4.0, 0.0, 1.0])
    np.testing.assert_array_equal(omega, w)
    assert omega is not w


def test_mar_weights():
    c = _cohort(observed=[True, False, True, True],
                z=[0.0, np.nan, 0.0, 1.0],
                pi=[0.5, np.nan, 0.25, 1.0])
    omega, w = assign_weights(c, WeightPlan("mar_inverse_prob"))
    np.testing.assert_allclose(w, [2.0, 0.0, 4.0, 1.0])
    np.testing.assert_array_equal(omega, w)


def test_estimate_fractions_pools():
    # Predictable scheme: the pool is everyone.  Stratum 0 has 6 subjects
    # with 3 selected, stratum 1 has 4 with 1 selected.
    c = Cohort(
        y=np.arange(1.0, 11.0),
        delta=[1, 1, 0, 0, 0, 0, 1, 0, 0, 0],
        z=np.zeros(10) + np.arange(10) % 2,
        stratum=[0] * 6 + [1] * 4,
        in_subcohort=[1, 0, 1, 1, 0, 0, 0, 1, 0, 0],
    )
    fr = estimate_fractions(c, WeightPlan("case_cohort_predictable"))
    assert fr.strata == (0, 1)
    np.testing.assert_allclose(fr.alpha, [0.5, 0.25])
    np.testing.assert_allclose(fr.gamma, [0.6, 0.4])
    np.testing.assert_array_equal(fr.n_selected, [3, 1])
    np.testing.assert_array_equal(fr.n_pool, [6, 4])

    # Nonpredictable scheme: only censored subjects form the pool, so the
    # stratum-0 pool shrinks to 4 (two selected) and stratum-1 to 3 (one).
    fr2 = estimate_fractions(c, WeightPlan("case_cohort_nonpredictable"))
    np.testing.assert_allclose(fr2.alpha, [0.5, 1.0 / 3.0])
    np.testing.assert_allclose(fr2.gamma, [0.4, 0.3])
    np.testing.assert_array_equal(fr2.n_pool, [4, 3])


def test_estimate_fractions_errors():
    c = _cohort(in_subcohort=[True, False, False, False])
    with pytest.raises(ValidationError, match="stratum"):
        estimate_fractions(c, WeightPlan("case_cohort_predictable"))
    with pytest.raises(ValidationError):
        estimate_fractions(c, WeightPlan("full_data"))
    c2 = _cohort(stratum=[0, 0, 1, 1],
                 in_subcohort=[True, True, False, False])
    with pytest.raises(ValidationError, match="no selected"):
        estimate_fractions(c2, WeightPlan("case_cohort_predictable"))
    # Plan strata that miss a populated pool stratum are rejected.
    c3 = _cohort(stratum=[0, 0, 1, 1],
                 in_subcohort=[True, True, True, True])
    with pytest.raises(ValidationError, match="outside"):
        estimate_fractions(
            c3, WeightPlan("case_cohort_predictable", strata=(0,)))


def test_fractions_lookup():
    fr = SamplingFractions(strata=(0, 1), alpha=np.array([0.5, 0.25]),
                           gamma=np.array([0.5, 0.5]),
                           n_selected=np.array([1, 1]),
                           n_pool=np.array([2, 4]))
    np.testing.assert_allclose(fr.lookup([1, 0, 1]), [0.25, 0.5, 0.25])
    with pytest.raises(ValidationError):
        fr.lookup([0, 2])
    out = fr.lookup([0, 2], strict=False)
    assert out[0] == 0.5 and np.isnan(out[1])


def test_estimated_fractions_drive_weights():
    c = Cohort(
        y=[1.0, 2.0, 3.0, 4.0],
        delta=[1, 0, 0, 0],
        z=[0.0, 1.0, 1.0, 0.0],
        stratum=[0, 0, 0, 0],
        in_subcohort=[0, 1, 0, 0],
    )
    # Censored pool is {1, 2, 3}, one selected: alpha = 1/3, weight 3.
    plan = WeightPlan("case_cohort_nonpredictable",
                      alpha_source="estimated_fractions")
    omega, w = assign_weights(c, plan)
    np.testing.assert_allclose(w, [1.0, 3.0, 0.0, 0.0])


def test_fraction_gradients():
    c = Cohort(
        y=[1.0, 2.0, 3.0, 4.0],
        delta=[1, 0, 0, 1],
        z=[0.0, 1.0, 0.0, 1.0],
        stratum=[0, 0, 1, 1],
        in_subcohort=[True, True, True, False],
    )
    fr = SamplingFractions(strata=(0, 1), alpha=np.array([0.25, 0.5]),
                           gamma=np.array([0.5, 0.5]),
                           n_selected=np.array([1, 1]),
                           n_pool=np.array([2, 2]))
    plan = WeightPlan("case_cohort_predictable", "estimated_fractions")
    wdot, omegadot = fraction_gradients(c, plan, fr)
    # Subcohort members differentiate -1/alpha^2 in their own stratum.
    np.testing.assert_allclose(wdot[:, 0], [-16.0, -16.0, 0.0, 0.0])
    np.testing.assert_allclose(wdot[:, 1], [0.0, 0.0, -4.0, 0.0])
    # Predictable event weights are constant: omegadot vanishes.
    np.testing.assert_array_equal(omegadot, np.zeros((4, 2)))

    plan_np = WeightPlan("case_cohort_nonpredictable",
                         "estimated_fractions")
    wdot_np, omegadot_np = fraction_gradients(c, plan_np, fr)
    # Only censored members respond; cases are flat in the fractions.
    np.testing.assert_allclose(wdot_np[:, 0], [0.0, -16.0, 0.0, 0.0])
    np.testing.assert_array_equal(omegadot_np, wdot_np)

    c_mar = Cohort(y=c.y, delta=c.delta, z=[0.0, 1.0, 0.0, 1.0],
                   stratum=[0, 0, 1, 1])
    plan_mar = WeightPlan("mar_inverse_prob", "estimated_fractions")
    wdot_mar, omegadot_mar = fraction_gradients(c_mar, plan_mar, fr)
    np.testing.assert_allclose(wdot_mar[:, 0], [-16.0, -16.0, 0.0, 0.0])
    np.testing.assert_allclose(wdot_mar[:, 1], [0.0, 0.0, -4.0, -4.0])
    np.testing.assert_array_equal(omegadot_mar, wdot_mar)

    with pytest.raises(ValidationError):
        fraction_gradients(c, WeightPlan("full_data"), fr)


def test_sampling_fraction_cov():
    fr = SamplingFractions(strata=(0, 1), alpha=np.array([0.2, 0.4]),
                           gamma=np.array([0.5, 0.5]),
                           n_selected=np.array([1, 2]),
                           n_pool=np.array([5, 5]))
    v0 = sampling_fraction_cov(fr)
    np.testing.assert_allclose(v0, np.diag([0.32, 0.48]))
