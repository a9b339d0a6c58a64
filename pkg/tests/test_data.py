import numpy as np
import pytest

from rankaft import (Cohort, Subject, TransformSpec, ValidationError,
                     ValidationPolicy, WeightPlan, read_cohort_csv,
                     validate_cohort)


def test_transform_identity_copies():
    t = TransformSpec("identity")
    x = np.array([1.0, 2.0, -3.0])
    out = t.apply(x)
    np.testing.assert_array_equal(out, x)
    out[0] = 99.0
    assert x[0] == 1.0


def test_transform_log():
    t = TransformSpec("log")
    np.testing.assert_allclose(t.apply([1.0, np.e]), [0.0, 1.0])
    with pytest.raises(ValidationError):
        t.apply([1.0, 0.0])
    with pytest.raises(ValidationError):
        t.apply([-2.0])


def test_transform_unknown_kind():
    with pytest.raises(ValidationError):
        TransformSpec("sqrt")


def test_cohort_basic_shapes():
    c = Cohort([1.0, 2.0], [1, 0], [0.5, 1.5])
    assert c.n == 2
    assert c.d == 1
    assert c.z.shape == (2, 1)
    assert c.delta.dtype == np.int8
    assert c.observed.all()
    assert not c.in_subcohort.any()
    assert c.pi is None and c.stratum is None


def test_cohort_rejects_bad_inputs():
    with pytest.raises(ValidationError):
        Cohort([], [], np.empty((0, 1)))
    with pytest.raises(ValidationError):
        Cohort([1.0], [2], [0.0])           # delta not 0/1
    with pytest.raises(ValidationError):
        Cohort([np.inf], [1], [0.0])        # nonfinite time
    with pytest.raises(ValidationError):
        Cohort([1.0, 2.0], [1, 0], [[1.0], [2.0], [3.0]])
    with pytest.raises(ValidationError):
        Cohort([1.0], [1], [np.nan])        # NaN z on observed row
    with pytest.raises(ValidationError):
        Cohort([1.0], [1], [0.0], pi=[1.5])
    with pytest.raises(ValidationError):
        Cohort([1.0], [1], [0.0], pi=[0.0])
    with pytest.raises(ValidationError):
        Cohort([1.0], [1], [0.0], stratum=[0, 1])
    with pytest.raises(ValidationError):
        Cohort([1.0, 2.0], [1, 0], [0.0, 1.0], observed=[1, 2])


def test_cohort_poisons_unobserved_covariates():
    c = Cohort([1.0, 2.0], [1, 0], [[3.0], [4.0]], observed=[True, False])
    assert np.isnan(c.z[1, 0])
    assert c.z[0, 0] == 3.0


def test_cohort_allows_nan_pi():
    c = Cohort([1.0, 2.0], [1, 0], [0.0, 1.0], pi=[np.nan, 0.25])
    assert np.isnan(c.pi[0]) and c.pi[1] == 0.25


def test_subject_roundtrip():
    subjects = [
        Subject(y=1.5, delta=1, z=(0.0, 2.0), stratum="a",
                in_subcohort=True, pi=0.5),
        Subject(y=2.5, delta=0, z=(np.nan, np.nan), stratum="b",
                observed=False),
    ]
    c = Cohort.from_subjects(subjects)
    back = c.subjects()
    assert back[0].y == 1.5 and back[0].delta == 1
    assert back[0].z == (0.0, 2.0)
    assert back[0].stratum == "a" and back[0].in_subcohort
    assert back[0].pi == 0.5
    assert not back[1].observed
    assert all(np.isnan(v) for v in back[1].z)
    with pytest.raises(ValidationError):
        Cohort.from_subjects([])
    with pytest.raises(ValidationError):
        Cohort.from_subjects([Subject(1.0, 1, (0.0,)),
                              Subject(2.0, 1, (0.0, 1.0))])


def test_validate_cohort_findings():
    c = Cohort([1.0, 2.0, 9.0], [0, 0, 0], [0.0, 1.0, 2.0],
               pi=[1e-9, 0.5, 0.5])
    plan = WeightPlan("full_data")
    codes = {v.code for v in validate_cohort(c, plan,
                                             ValidationPolicy(tau=5.0))}
    assert codes == {"no_events", "pi_below_floor", "time_after_horizon"}


def test_validate_cohort_unobserved_needed():
    c = Cohort([1.0, 2.0], [1, 0], [[0.0], [np.nan]],
               observed=[True, False], in_subcohort=[True, True],
               pi=[0.5, 0.5])
    plan = WeightPlan("case_cohort_predictable")
    codes = [v.code for v in validate_cohort(c, plan)]
    assert codes == ["unobserved_needed"]
    # The weighted subject is row 1.
    assert validate_cohort(c, plan)[0].index == 1


def test_validate_cohort_plan_failure_is_a_finding():
    c = Cohort([1.0, 2.0], [1, 0], [0.0, 1.0], in_subcohort=[True, False])
    plan = WeightPlan("case_cohort_predictable")   # needs a pi column
    findings = validate_cohort(c, plan)
    assert [v.code for v in findings] == ["plan"]


def _write(path, text):
    path.write_text(text)
    return str(path)


def test_read_cohort_csv_roundtrip(tmp_path):
    path = _write(tmp_path / "c.csv", (
        "time,status,z1,z2,stratum,observed,in_subcohort,pi\n"
        "1.5,1,0.0,2.0,a,1,1,0.5\n"
        "2.5,0,,,b,0,0,\n"
        "0.5,1,1.0,-1.0,a,1,0,0.25\n"))
    c = read_cohort_csv(path)
    assert c.n == 3 and c.d == 2
    np.testing.assert_allclose(c.y, [1.5, 2.5, 0.5])
    np.testing.assert_array_equal(c.delta, [1, 0, 1])
    assert c.observed.tolist() == [True, False, True]
    assert c.in_subcohort.tolist() == [True, False, False]
    assert c.stratum.tolist() == ["a", "b", "a"]
    assert np.isnan(c.pi[1]) and c.pi[0] == 0.5
    assert np.isnan(c.z[1]).all()


def test_read_cohort_csv_log_transform(tmp_path):
    path = _write(tmp_path / "c.csv", "time,status,z1\n1.0,1,0.0\n"
                                      f"{np.e},0,1.0\n")
    c = read_cohort_csv(path, TransformSpec("log"))
    np.testing.assert_allclose(c.y, [0.0, 1.0])


def test_read_cohort_csv_errors(tmp_path):
    with pytest.raises(OSError):
        read_cohort_csv(str(tmp_path / "missing.csv"))
    cases = [
        ("status,z1\n1,0.0\n", "missing required column 'time'"),
        ("time,status\n1.0,1\n", "missing required column 'z1'"),
        ("time,status,z1,z3\n1.0,1,0.0,0.0\n", "contiguous"),
        ("time,status,z1,extra\n1.0,1,0.0,0.0\n", "unknown columns"),
        ("time,status,z1,status\n1.0,1,0.0,1\n", "duplicate"),
        ("", "header row required"),
        ("time,status,z1\n", "no data rows"),
        ("time,status,z1\nx,1,0.0\n", "cannot parse"),
        ("time,status,z1\n1.0,2,0.0\n", "expected 0 or 1"),
        ("time,status,z1\n1.0,1,\n", "observed is 1"),
        ("time,status,z1,stratum\n1.0,1,0.0,\n", "empty stratum"),
    ]
    for body, fragment in cases:
        path = _write(tmp_path / "bad.csv", body)
        with pytest.raises(ValidationError, match=fragment):
            read_cohort_csv(path)
