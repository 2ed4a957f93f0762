"""The substitution operator S and the growth-hypothesis checkers.

S maps a candidate solution v to the dual vector of f*F(v) + h*H(v);
it is bounded, non-decreasing and continuous as long as F and H are
monotone, which is all the monotone iteration needs.  check_alpha1 and
check_alpha2 validate the growth conditions on (F, H) and the sign
conditions on (a, f, h) by sampling, and report the first violation
instead of raising.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .geometry import Field
from .linear_operator import DualVector, LinearProblem


def critical_exponent(n):
    """2n/(n-2), the growth threshold; defined for n >= 3."""
    n = int(n)
    if n < 3:
        raise ValueError(f"critical exponent needs n >= 3, got n = {n}")
    return 2.0 * n / (n - 2.0)


class ScalarNonlinearity:
    """Entrywise monotone nonlinearity: a power law or an interpolated table.

    Power laws are t**p on t >= 0 and zero below.  Tables interpolate
    linearly between strictly increasing abscissae and extend with
    constant values; with ``truncate`` (the default) they also vanish on
    t < 0.  Non-truncating tables exist only so the hypothesis checker
    has something to reject.
    """

    def __init__(self, kind, p=None, ts=None, values=None, truncate=True, source=None):
        self.kind = kind
        self.truncate = bool(truncate)
        self.source = source  # table path, when loaded from CSV
        if kind == "power":
            self.p = float(p)
            if self.p <= 0.0:
                raise ValueError("power exponent must be positive")
            self.ts = None
            self.values = None
        elif kind == "table":
            self.p = None
            self.ts = np.asarray(ts, dtype=float)
            self.values = np.asarray(values, dtype=float)
            if self.ts.ndim != 1 or self.ts.shape != self.values.shape:
                raise ValueError("table needs matching 1-d t and value columns")
            if self.ts.size < 2:
                raise ValueError("table needs at least two rows")
            if not np.all(np.diff(self.ts) > 0.0):
                raise ValueError("table t column must be strictly increasing")
            if not np.all(np.isfinite(self.ts)) or not np.all(np.isfinite(self.values)):
                raise ValueError("table contains non-finite entries")
            if np.any(np.diff(self.values) < 0.0):
                raise ValueError("table values must be non-decreasing")
        else:
            raise ValueError(f"unknown nonlinearity kind '{kind}'")

    @classmethod
    def power(cls, p):
        return cls("power", p=p)

    @classmethod
    def table(cls, ts, values, truncate=True, source=None):
        return cls("table", ts=ts, values=values, truncate=truncate, source=source)

    @classmethod
    def from_csv(cls, path, truncate=True):
        ts, values = [], []
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [c.strip() for c in header[:2]] != ["t", "value"]:
                raise ValueError(f"{path}: expected CSV header 't,value'")
            for row in reader:
                if not row or not "".join(row).strip():
                    continue
                ts.append(float(row[0]))
                values.append(float(row[1]))
        return cls("table", ts=ts, values=values, truncate=truncate, source=str(path))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        if self.kind == "power":
            out = np.zeros_like(t)
            pos = t > 0.0
            out[pos] = t[pos] ** self.p
        else:
            out = np.interp(t, self.ts, self.values)
            if self.truncate:
                out = np.where(t < 0.0, 0.0, out)
        return float(out[0]) if scalar else out

    def describe(self):
        if self.kind == "power":
            return f"power({self.p:g})"
        return f"table({len(self.ts)} rows)"


class NonlinearProblem:
    """Coefficients (a, f, h), nonlinearities (F, H) and declared n.

    Stored permissively so the hypothesis checkers can report on bad
    instances; the iteration driver is the gatekeeper.
    """

    def __init__(self, domain, a, f, h, F, H, n=None, q=None):
        self.domain = domain
        self.a = domain.field(a)
        self.f = domain.field(f)
        self.h = domain.field(h)
        self.F = F
        self.H = H
        self.n = int(n) if n is not None else domain.dimension
        if q is not None:
            self.q = float(q)
        elif H.kind == "power":
            self.q = H.p
        else:
            self.q = None
        self._linear = None

    @property
    def linear(self):
        """The LinearProblem for a; raises unless min a > 0."""
        if self._linear is None:
            self._linear = LinearProblem(self.domain, self.a)
        return self._linear


@dataclass
class Alpha1Report:
    passed: bool
    clause: str | None = None
    t: float | None = None
    value: float | None = None
    bound: float | None = None
    warnings: list = dataclass_field(default_factory=list)

    def to_json_dict(self):
        out = {"passed": self.passed, "warnings": list(self.warnings)}
        if not self.passed:
            out.update(clause=self.clause, t=self.t, value=self.value, bound=self.bound)
        return out


@dataclass
class Alpha2Report:
    passed: bool
    clause: str | None = None
    vertex: int | None = None

    def to_json_dict(self):
        out = {"passed": self.passed}
        if not self.passed:
            out.update(clause=self.clause, vertex=self.vertex)
        return out


def check_alpha1(F, H, n, q, t_max, samples=1000):
    """Sample the growth bounds 0 <= F <= t^(2*-1), 0 <= H <= t^q on
    [-1, t_max] and the vanishing clause on t < 0.

    Returns a report naming the first violated clause.  q >= 1 is legal
    for the bound but outside the sublinear range the power-law instance
    uses, so it is flagged as a warning rather than rejected.
    """
    q = float(q)
    t_max = float(t_max)
    p_crit = critical_exponent(n) - 1.0
    if not 0.0 < q < p_crit:
        raise ValueError(f"q must satisfy 0 < q < {p_crit:g}, got q = {q:g}")
    if t_max <= 0.0:
        raise ValueError("t_max must be positive")
    warnings = []
    if q >= 1.0:
        warnings.append(
            f"q = {q:g} is >= 1; the sublinear range 0 < q < 1 is the usual "
            f"setting, continuing with the bound q < {p_crit:g}"
        )

    ts = np.linspace(-1.0, t_max, samples)
    fvals = np.asarray(F(ts), dtype=float)
    hvals = np.asarray(H(ts), dtype=float)

    def report(clause, i, value, bound):
        return Alpha1Report(
            passed=False,
            clause=clause,
            t=float(ts[i]),
            value=float(value),
            bound=float(bound),
            warnings=warnings,
        )

    neg = ts < 0.0
    pos = ~neg
    tpos = np.where(pos, ts, 0.0)
    with np.errstate(invalid="ignore"):
        f_bound = tpos ** p_crit
        h_bound = tpos ** q
    # slack keeps the equality case F = power(2*-1) from tripping on rounding
    f_allow = f_bound + 1e-12 * (f_bound + 1.0)
    h_allow = h_bound + 1e-12 * (h_bound + 1.0)

    for i in range(samples):
        if neg[i]:
            if fvals[i] != 0.0:
                return report("F(t) = 0 for t < 0", i, fvals[i], 0.0)
            if hvals[i] != 0.0:
                return report("H(t) = 0 for t < 0", i, hvals[i], 0.0)
        else:
            if not np.isfinite(fvals[i]) or fvals[i] < 0.0:
                return report("0 <= F(t)", i, fvals[i], 0.0)
            if fvals[i] > f_allow[i]:
                return report("F(t) <= t^(2*-1)", i, fvals[i], f_bound[i])
            if not np.isfinite(hvals[i]) or hvals[i] < 0.0:
                return report("0 <= H(t)", i, hvals[i], 0.0)
            if hvals[i] > h_allow[i]:
                return report("H(t) <= t^q", i, hvals[i], h_bound[i])
    return Alpha1Report(passed=True, warnings=warnings)


def check_alpha2(problem):
    """min a > 0, f >= 0 not identically 0, h >= 0 not identically 0."""
    a = problem.a.values
    if a.min() <= 0.0:
        return Alpha2Report(False, "a > 0", int(np.flatnonzero(a <= 0.0)[0]))
    for name, values in (("f", problem.f.values), ("h", problem.h.values)):
        if values.min() < 0.0:
            return Alpha2Report(
                False, f"{name} >= 0", int(np.flatnonzero(values < 0.0)[0])
            )
        if values.max() <= 0.0:
            return Alpha2Report(False, f"{name} != 0", None)
    return Alpha2Report(True)


def apply_S(problem, v):
    """Dual vector of f F(v) + h H(v); v is clamped at 0 first, so
    apply_S(v) == apply_S(max(v, 0)) holds exactly."""
    if v.domain is not problem.domain:
        raise ValueError("domain mismatch")
    vp = np.maximum(v.values, 0.0)
    rhs = problem.f.values * problem.F(vp) + problem.h.values * problem.H(vp)
    return DualVector(problem.domain, problem.domain.mass * rhs)
