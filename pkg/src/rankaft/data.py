"""Cohort container, time transforms, and input validation.

A cohort holds right-censored follow-up data together with the sampling
bookkeeping needed by weighted estimation: stratum labels, covariate
availability flags, subcohort membership, and per-subject selection
probabilities.  Internally everything is columnar numpy; :class:`Subject`
is the record-level view used for construction and inspection.
"""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError

TIME_COLUMN = "time"
STATUS_COLUMN = "status"
OPTIONAL_COLUMNS = ("stratum", "observed", "in_subcohort", "pi")

_Z_PATTERN = re.compile(r"^z(\d+)$")


@dataclass(frozen=True)
class TransformSpec:
    """Time-scale transform applied to raw follow-up times.

    ``identity`` keeps times as given, ``log`` maps to the log scale and
    rejects nonpositive times.
    """

    kind: str = "identity"

    def __post_init__(self):
        if self.kind not in ("identity", "log"):
            raise ValidationError(
                f"unknown transform kind {self.kind!r}; expected 'identity' or 'log'"
            )

    def apply(self, times):
        times = np.asarray(times, dtype=float)
        if self.kind == "identity":
            return times.copy()
        bad = np.flatnonzero(~(times > 0))
        if bad.size:
            raise ValidationError(
                "log transform requires positive times; "
                f"nonpositive at rows {bad.tolist()[:10]}"
            )
        return np.log(times)


@dataclass(frozen=True)
class Subject:
    """One study subject on the analysis time scale.

    ``y`` is the (possibly transformed) follow-up time, ``delta`` the event
    indicator.  ``observed`` says whether the covariate vector was actually
    collected; when it is False the entries of ``z`` are unusable and kept
    as NaN.  ``pi`` is the design selection probability when known.
    """

    y: float
    delta: int
    z: tuple
    stratum: object = None
    observed: bool = True
    in_subcohort: bool = False
    pi: float | None = None


@dataclass(frozen=True)
class ValidationPolicy:
    """Thresholds used by :func:`validate_cohort` and the risk-set engine.

    ``zeta`` is the floor below which a selection probability is treated as
    violating the positivity condition.  ``tau`` is an optional follow-up
    horizon; times beyond it are flagged.  ``min_risk_weight`` is the floor
    on the per-subject-scaled risk-set weight below which a risk set counts
    as empty.
    """

    zeta: float = 1e-6
    tau: float | None = None
    min_risk_weight: float = 1e-12


@dataclass(frozen=True)
class Violation:
    """One validation finding: a machine code, the subject row, a message."""

    code: str
    index: int | None
    message: str


class Cohort:
    """Columnar container of subjects.

    Parameters
    ----------
    y : array_like, shape (n,)
        Follow-up times on the analysis scale.
    delta : array_like, shape (n,)
        Event indicators, 0 or 1.
    z : array_like, shape (n, d) or (n,)
        Covariate rows.  Rows with ``observed`` False may be NaN and are
        forced to NaN so accidental use is visible.
    stratum : array_like or None
        Sampling stratum labels (any hashable values).
    observed : array_like or None
        Covariate availability flags; default all True.
    in_subcohort : array_like or None
        Subcohort membership flags; default all False.
    pi : array_like or None
        Design selection probabilities in (0, 1], NaN allowed where a
        subject's probability is irrelevant.
    """

    def __init__(self, y, delta, z, stratum=None, observed=None,
                 in_subcohort=None, pi=None):
        y = np.asarray(y, dtype=float).reshape(-1)
        n = y.shape[0]
        if n == 0:
            raise ValidationError("cohort is empty")

        delta = np.asarray(delta)
        if delta.shape != (n,):
            raise ValidationError(
                f"delta has shape {delta.shape}, expected ({n},)")
        bad = np.flatnonzero(~np.isin(delta, (0, 1)))
        if bad.size:
            raise ValidationError(
                f"status must be 0 or 1; invalid at rows {bad.tolist()[:10]}")
        delta = delta.astype(np.int8)

        bad = np.flatnonzero(~np.isfinite(y))
        if bad.size:
            raise ValidationError(
                f"nonfinite follow-up times at rows {bad.tolist()[:10]}")

        z = np.asarray(z, dtype=float)
        if z.ndim == 1:
            z = z.reshape(n, 1)
        if z.ndim != 2 or z.shape[0] != n:
            raise ValidationError(
                f"covariate array has shape {z.shape}, expected ({n}, d)")
        z = np.array(z, dtype=float, order="C")

        if observed is None:
            observed = np.ones(n, dtype=bool)
        else:
            observed = _as_flag(observed, n, "observed")
        if in_subcohort is None:
            in_subcohort = np.zeros(n, dtype=bool)
        else:
            in_subcohort = _as_flag(in_subcohort, n, "in_subcohort")

        bad = np.flatnonzero(observed & ~np.isfinite(z).all(axis=1))
        if bad.size:
            raise ValidationError(
                "nonfinite covariates on observed rows "
                f"{bad.tolist()[:10]}")
        # Unobserved rows are poisoned so silent use cannot happen.
        z[~observed] = np.nan

        if pi is not None:
            pi = np.asarray(pi, dtype=float).reshape(-1)
            if pi.shape != (n,):
                raise ValidationError(
                    f"pi has shape {pi.shape}, expected ({n},)")
            with np.errstate(invalid="ignore"):
                bad = np.flatnonzero(np.isfinite(pi) & ((pi <= 0) | (pi > 1)))
            if bad.size:
                raise ValidationError(
                    f"pi outside (0, 1] at rows {bad.tolist()[:10]}")

        if stratum is not None:
            stratum = np.asarray(stratum)
            if stratum.shape != (n,):
                raise ValidationError(
                    f"stratum has shape {stratum.shape}, expected ({n},)")

        self.y = y
        self.delta = delta
        self.z = z
        self.stratum = stratum
        self.observed = observed
        self.in_subcohort = in_subcohort
        self.pi = pi

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def d(self):
        return self.z.shape[1]

    @classmethod
    def from_subjects(cls, subjects: Iterable[Subject]) -> "Cohort":
        subjects = list(subjects)
        if not subjects:
            raise ValidationError("cohort is empty")
        d = len(subjects[0].z)
        for i, s in enumerate(subjects):
            if len(s.z) != d:
                raise ValidationError(
                    f"covariate length {len(s.z)} at row {i} differs from {d}")
        y = [s.y for s in subjects]
        delta = [s.delta for s in subjects]
        z = [[float(v) for v in s.z] for s in subjects]
        stratum = None
        if any(s.stratum is not None for s in subjects):
            stratum = [s.stratum for s in subjects]
        pi = None
        if any(s.pi is not None for s in subjects):
            pi = [math.nan if s.pi is None else s.pi for s in subjects]
        return cls(
            y, delta, z,
            stratum=stratum,
            observed=[s.observed for s in subjects],
            in_subcohort=[s.in_subcohort for s in subjects],
            pi=pi,
        )

    def subjects(self) -> list[Subject]:
        out = []
        for i in range(self.n):
            out.append(Subject(
                y=float(self.y[i]),
                delta=int(self.delta[i]),
                z=tuple(self.z[i]),
                stratum=None if self.stratum is None else self.stratum[i],
                observed=bool(self.observed[i]),
                in_subcohort=bool(self.in_subcohort[i]),
                pi=None if self.pi is None else float(self.pi[i]),
            ))
        return out

    def __repr__(self):
        return (f"Cohort(n={self.n}, d={self.d}, "
                f"events={int(self.delta.sum())})")


def _as_flag(values, n, name):
    arr = np.asarray(values)
    if arr.shape != (n,):
        raise ValidationError(f"{name} has shape {arr.shape}, expected ({n},)")
    if arr.dtype == bool:
        return arr.copy()
    bad = np.flatnonzero(~np.isin(arr, (0, 1)))
    if bad.size:
        raise ValidationError(
            f"{name} must be 0 or 1; invalid at rows {bad.tolist()[:10]}")
    return arr.astype(bool)


def validate_cohort(cohort: Cohort, plan, policy: ValidationPolicy | None = None):
    """Check a cohort against a weight plan; return a list of violations.

    An empty list means the cohort is usable under the plan.  Nothing is
    raised here: the caller decides whether findings are fatal.
    """
    from .weights import assign_weights  # local import, avoids cycle

    if policy is None:
        policy = ValidationPolicy()
    findings: list[Violation] = []

    if not cohort.delta.any():
        findings.append(Violation("no_events", None, "cohort has no events"))

    if policy.tau is not None:
        for i in np.flatnonzero(cohort.y > policy.tau):
            findings.append(Violation(
                "time_after_horizon", int(i),
                f"time {cohort.y[i]:g} exceeds horizon {policy.tau:g}"))

    if cohort.pi is not None:
        with np.errstate(invalid="ignore"):
            low = np.flatnonzero(np.isfinite(cohort.pi)
                                 & (cohort.pi < policy.zeta))
        for i in low:
            findings.append(Violation(
                "pi_below_floor", int(i),
                f"selection probability {cohort.pi[i]:.3g} below floor "
                f"{policy.zeta:g}"))

    try:
        omega, w = assign_weights(cohort, plan)
    except ValidationError as exc:
        findings.append(Violation("plan", None, str(exc)))
        return findings

    needed = (w != 0) | ((omega != 0) & (cohort.delta == 1))
    for i in np.flatnonzero(needed & ~cohort.observed):
        findings.append(Violation(
            "unobserved_needed", int(i),
            "covariates unobserved but subject carries nonzero weight"))
    return findings


def read_cohort_csv(path, transform: TransformSpec | None = None) -> Cohort:
    """Read a cohort from CSV.

    Required columns are ``time``, ``status`` and a contiguous block
    ``z1..zd``; ``stratum``, ``observed``, ``in_subcohort`` and ``pi`` are
    optional.  A header row is required and unknown columns are rejected.
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise OSError(f"cannot read cohort file {path!r}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path!r} is empty; header row required")
        header = [h.strip() for h in header]
        rows = [row for row in reader if row]

    for col in (TIME_COLUMN, STATUS_COLUMN):
        if col not in header:
            raise ValidationError(f"missing required column {col!r}")

    z_ids = []
    for h in header:
        m = _Z_PATTERN.match(h)
        if m:
            z_ids.append(int(m.group(1)))
    if not z_ids:
        raise ValidationError("missing required column 'z1'")
    d = max(z_ids)
    if sorted(z_ids) != list(range(1, d + 1)):
        raise ValidationError(
            f"covariate columns must be contiguous z1..z{d}; got "
            f"{sorted('z%d' % i for i in z_ids)}")

    known = {TIME_COLUMN, STATUS_COLUMN, *OPTIONAL_COLUMNS,
             *(f"z{i}" for i in range(1, d + 1))}
    unknown = [h for h in header if h not in known]
    if unknown:
        raise ValidationError(f"unknown columns {unknown!r}")
    if len(set(header)) != len(header):
        raise ValidationError("duplicate columns in header")

    col_of = {h: i for i, h in enumerate(header)}
    n = len(rows)
    if n == 0:
        raise ValidationError("cohort file has a header but no data rows")

    def cell(row, name):
        idx = col_of[name]
        if idx >= len(row):
            return ""
        return row[idx].strip()

    times = np.empty(n)
    status = np.empty(n, dtype=int)
    z = np.full((n, d), np.nan)
    observed = np.ones(n, dtype=bool)
    in_subcohort = np.zeros(n, dtype=bool)
    stratum = [None] * n
    pi = np.full(n, np.nan)

    has = {name: name in col_of for name in OPTIONAL_COLUMNS}

    for i, row in enumerate(rows):
        times[i] = _parse_float(cell(row, TIME_COLUMN), TIME_COLUMN, i)
        status[i] = _parse_flag(cell(row, STATUS_COLUMN), STATUS_COLUMN, i)
        if has["observed"]:
            observed[i] = _parse_flag(cell(row, "observed"), "observed", i)
        if has["in_subcohort"]:
            in_subcohort[i] = _parse_flag(
                cell(row, "in_subcohort"), "in_subcohort", i)
        if has["stratum"]:
            raw = cell(row, "stratum")
            if raw == "":
                raise ValidationError(f"empty stratum at row {i}")
            stratum[i] = raw
        if has["pi"]:
            raw = cell(row, "pi")
            if raw != "":
                pi[i] = _parse_float(raw, "pi", i)
        for j in range(d):
            raw = cell(row, f"z{j + 1}")
            if raw == "":
                if observed[i]:
                    raise ValidationError(
                        f"empty z{j + 1} at row {i} but observed is 1")
            else:
                z[i, j] = _parse_float(raw, f"z{j + 1}", i)

    if transform is None:
        transform = TransformSpec("identity")
    times = transform.apply(times)

    return Cohort(
        times, status, z,
        stratum=np.array(stratum, dtype=object) if has["stratum"] else None,
        observed=observed,
        in_subcohort=in_subcohort,
        pi=pi if has["pi"] else None,
    )


def _parse_float(raw, name, row):
    try:
        value = float(raw)
    except ValueError:
        raise ValidationError(
            f"column {name!r} row {row}: cannot parse {raw!r} as a number")
    return value


def _parse_flag(raw, name, row):
    if raw == "0":
        return 0
    if raw == "1":
        return 1
    raise ValidationError(
        f"column {name!r} row {row}: expected 0 or 1, got {raw!r}")
