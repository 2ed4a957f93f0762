"""Bracket verification and the two-sided monotone iteration.

A verified bracket is a pair of fields 0 <= lower <= upper with the
defect signs of a lower and an upper solution.  From its two ends the
driver runs u_{k+1} = T(S(u_k)); on an M-matrix compatible domain with
valid sign hypotheses the lower sequence climbs, the upper one
descends, and both stay ordered, so the limits are the minimal and
maximal fixed points inside the bracket.  The driver re-checks every
link of that chain within a small relative slack and aborts loudly if
floating point (or a broken precondition) ever bends it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Field, mesh_quality
from .linear_operator import solve_T
from .nonlinearity import apply_S, check_alpha2
from .serialize import write_csv, write_json

ORDERING_SLACK = 1e-9  # relative, same scale as the default stopping tol


class BracketError(ValueError):
    """Bracket verification failed; names the side and vertex."""


class OrderingError(RuntimeError):
    """The monotone chain broke beyond slack; diagnostic in args."""


@dataclass(eq=False)
class Bracket:
    lower: Field
    upper: Field
    verification_tol: float


@dataclass
class StepRecord:
    step: int
    max_change: float
    min_u: float
    max_u: float
    defect_norm: float


@dataclass
class IterationTrace:
    lower_steps: list
    upper_steps: list
    ordering_violations: int
    steps: int
    converged: bool

    def rows(self):
        """Interleaved per-step rows for the CSV export."""
        out = []
        for k in range(max(len(self.lower_steps), len(self.upper_steps))):
            for seq, records in (("lower", self.lower_steps), ("upper", self.upper_steps)):
                if k < len(records):
                    r = records[k]
                    out.append(
                        (r.step, seq, r.max_change, r.min_u, r.max_u, r.defect_norm)
                    )
        return out

    def write_csv(self, path):
        write_csv(
            path,
            ["step", "seq", "max_change", "min_u", "max_u", "defect_norm"],
            self.rows(),
        )


@dataclass(eq=False)
class SolutionPair:
    u_star: Field
    u_upper_star: Field
    residual_lower: float
    residual_upper: float
    coincide: bool

    def to_json_dict(self):
        return {
            "u_star": [float(v) for v in self.u_star.values],
            "u_upper_star": [float(v) for v in self.u_upper_star.values],
            "residual_lower": float(self.residual_lower),
            "residual_upper": float(self.residual_upper),
            "coincide": bool(self.coincide),
        }

    def write_json(self, path):
        write_json(path, self.to_json_dict())

    def write_csv(self, path):
        rows = [
            (i, float(lo), float(up))
            for i, (lo, up) in enumerate(
                zip(self.u_star.values, self.u_upper_star.values)
            )
        ]
        write_csv(path, ["vertex", "u_star", "u_upper_star"], rows)


def defect(problem, v):
    """Weak-form residual (L + M diag(a)) v - S(v), entrywise.

    Nonpositive everywhere means v is a lower solution, nonnegative an
    upper one; testing against nodal hats suffices since every
    nonnegative test function is a nonnegative combination of them.
    """
    v = problem.domain.field(v)
    lhs = problem.linear.system_matrix @ v.values
    return Field(problem.domain, lhs - apply_S(problem, v).values)


def _defect_scale(problem, v):
    scale = float(np.abs(problem.domain.mass * problem.a.values * v.values).max())
    return scale + np.finfo(float).eps


def verify_lower(problem, v, tol):
    """True iff every defect entry <= tol * scale; v must be >= 0."""
    v = problem.domain.field(v)
    if v.values.min() < 0.0:
        raise ValueError("candidate lower solution must be nonnegative")
    d = defect(problem, v).values
    return bool(d.max() <= tol * _defect_scale(problem, v))


def verify_upper(problem, v, tol):
    """True iff every defect entry >= -tol * scale; v must be >= 0."""
    v = problem.domain.field(v)
    if v.values.min() < 0.0:
        raise ValueError("candidate upper solution must be nonnegative")
    d = defect(problem, v).values
    return bool(d.min() >= -tol * _defect_scale(problem, v))


def make_bracket(problem, lower, upper, verification_tol=1e-9):
    """Verify and package a (lower, upper) pair; raises BracketError."""
    lower = problem.domain.field(lower)
    upper = problem.domain.field(upper)
    if lower.values.min() < 0.0:
        raise BracketError(
            f"lower solution negative at vertex {int(np.argmin(lower.values))}"
        )
    if lower.values.max() <= 0.0:
        raise BracketError("lower solution is identically zero")
    if np.any(lower.values > upper.values):
        bad = int(np.flatnonzero(lower.values > upper.values)[0])
        raise BracketError(f"lower > upper at vertex {bad}")
    d_lo = defect(problem, lower).values
    scale_lo = _defect_scale(problem, lower)
    if d_lo.max() > verification_tol * scale_lo:
        bad = int(np.argmax(d_lo))
        raise BracketError(
            f"lower defect positive at vertex {bad}: "
            f"{d_lo[bad]:.6e} > {verification_tol * scale_lo:.6e}"
        )
    d_up = defect(problem, upper).values
    scale_up = _defect_scale(problem, upper)
    if d_up.min() < -verification_tol * scale_up:
        bad = int(np.argmin(d_up))
        raise BracketError(
            f"upper defect negative at vertex {bad}: "
            f"{d_up[bad]:.6e} < {-verification_tol * scale_up:.6e}"
        )
    return Bracket(lower=lower, upper=upper, verification_tol=verification_tol)


def positivity_check(domain, u):
    """min u > 0; only meaningful (and only allowed) on connected domains."""
    if not domain.is_connected():
        raise ValueError("positivity check requires a connected domain")
    u = domain.field(u)
    return bool(u.values.min() > 0.0)


def _run_sequence(problem, start, tol, max_steps, linear_tol):
    """One monotone sequence u_{k+1} = T(S(u_k)); returns iterates and records."""
    linear = problem.linear
    domain = problem.domain
    u = start.values.copy()
    psi = apply_S(problem, Field(domain, u))
    iterates = [u.copy()]
    records = []
    converged = False
    for k in range(1, max_steps + 1):
        unew_field, _ = solve_T(linear, psi, tol=linear_tol, x0=Field(domain, u))
        unew = unew_field.values
        change = float(np.abs(unew - u).max())
        psi_new = apply_S(problem, unew_field)
        defect_vec = linear.system_matrix @ unew - psi_new.values
        records.append(
            StepRecord(
                step=k,
                max_change=change,
                min_u=float(unew.min()),
                max_u=float(unew.max()),
                defect_norm=float(np.abs(defect_vec).max()),
            )
        )
        iterates.append(unew.copy())
        u = unew
        psi = psi_new
        if change <= tol:
            converged = True
            break
    return iterates, records, converged


def iterate_monotone(problem, bracket, tol=1e-9, max_steps=500, linear_tol=None):
    """Run both monotone sequences and certify the chain.

    Returns (SolutionPair, IterationTrace).  Non-convergence within
    max_steps is reported through the trace's converged flag, not an
    exception; a broken chain ordering raises OrderingError.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    if linear_tol is None:
        linear_tol = tol / 100.0
    domain = problem.domain
    if not mesh_quality(domain).is_m_matrix_compatible:
        raise ValueError(
            "domain is not M-matrix compatible; the chain ordering is not "
            "guaranteed, refusing to iterate"
        )
    a2 = check_alpha2(problem)
    if not a2.passed:
        raise ValueError(f"sign hypotheses fail: {a2.clause}")
    # re-verify: brackets may arrive hand-built
    bracket = make_bracket(
        problem, bracket.lower, bracket.upper, bracket.verification_tol
    )

    lo_iter, lo_rec, lo_conv = _run_sequence(
        problem, bracket.lower, tol, max_steps, linear_tol
    )
    up_iter, up_rec, up_conv = _run_sequence(
        problem, bracket.upper, tol, max_steps, linear_tol
    )

    slack = ORDERING_SLACK * max(float(np.abs(bracket.upper.values).max()), 1.0)
    worst = None  # (amount, description)

    def check(amount, description):
        nonlocal worst
        if amount > slack and (worst is None or amount > worst[0]):
            worst = (amount, description)

    for name, seq, sign in (("lower", lo_iter, 1.0), ("upper", up_iter, -1.0)):
        for k in range(len(seq) - 1):
            # lower must climb, upper must descend
            gap = float((sign * (seq[k] - seq[k + 1])).max())
            check(gap, f"{name} sequence not monotone at step {k + 1}")
    steps = max(len(lo_iter), len(up_iter))
    for k in range(steps):
        lo = lo_iter[min(k, len(lo_iter) - 1)]
        up = up_iter[min(k, len(up_iter) - 1)]
        check(float((lo - up).max()), f"lower above upper at step {k}")
    if worst is not None:
        raise OrderingError(
            f"chain ordering violated beyond slack {slack:.3e}: "
            f"{worst[1]} (amount {worst[0]:.3e}); this signals a "
            "non-M-matrix domain or an unverified bracket"
        )

    u_star = lo_iter[-1]
    u_upper_star = up_iter[-1]
    sandwich = max(
        float((bracket.lower.values - u_star).max()),
        float((u_star - u_upper_star).max()),
        float((u_upper_star - bracket.upper.values).max()),
    )
    if sandwich > slack:
        raise OrderingError(
            f"sandwich violated by {sandwich:.3e} (slack {slack:.3e})"
        )

    pair = SolutionPair(
        u_star=Field(domain, u_star),
        u_upper_star=Field(domain, u_upper_star),
        residual_lower=lo_rec[-1].defect_norm if lo_rec else 0.0,
        residual_upper=up_rec[-1].defect_norm if up_rec else 0.0,
        coincide=bool(np.abs(u_upper_star - u_star).max() <= 10.0 * tol),
    )
    trace = IterationTrace(
        lower_steps=lo_rec,
        upper_steps=up_rec,
        ordering_violations=0,
        steps=max(len(lo_rec), len(up_rec)),
        converged=lo_conv and up_conv,
    )
    return pair, trace
