"""The linear solution operator T and its order/continuity certificates.

T maps a dual vector psi to the unique u with (L + M diag(a)) u = psi,
computed by conjugate-gradient minimization of the energy

    I(u) = 1/2 u'Lu + 1/2 u'M diag(a) u - u'psi.

The system matrix is SPD whenever min a > 0, which LinearProblem
enforces.  check_comparison and lipschitz_certificate expose the
comparison principle and the 1/C Lipschitz bound as checkable
operations; both are exercised heavily by the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import Field, mesh_quality


class ConvergenceError(RuntimeError):
    """CG hit its iteration cap; carries the partial SolveReport."""

    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


@dataclass(eq=False)
class DualVector:
    """A functional: entry i is its value on the nodal hat at vertex i."""

    domain: object
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.domain.vertex_count,):
            raise ValueError("dual vector length does not match domain")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("dual vector contains non-finite entries")


@dataclass
class SolveReport:
    iterations: int
    final_residual_norm: float
    energy_history: list

    def to_json_dict(self):
        return {
            "iterations": self.iterations,
            "final_residual_norm": self.final_residual_norm,
            "energy_history": list(self.energy_history),
        }


class LinearProblem:
    """Domain plus coefficient a > 0; owns A = L + M diag(a)."""

    def __init__(self, domain, a):
        self.domain = domain
        self.a = domain.field(a)
        amin = float(self.a.values.min())
        if amin <= 0.0:
            raise ValueError(f"a must be positive everywhere (min a = {amin:g})")
        self.coercivity_constant = min(1.0, amin)
        self._system = None
        self._h1 = None

    @property
    def system_matrix(self):
        if self._system is None:
            self._system = (
                self.domain.stiffness + sp.diags(self.domain.mass * self.a.values)
            ).tocsr()
        return self._system

    @property
    def h1_matrix(self):
        """L + M, the discrete H1 inner product."""
        if self._h1 is None:
            self._h1 = (self.domain.stiffness + sp.diags(self.domain.mass)).tocsr()
        return self._h1


def _require_same_domain(domain, other):
    if other.domain is not domain:
        raise ValueError("domain mismatch")


def embed_function(field):
    """A function acts on test functions through the mass matrix: M f."""
    return DualVector(field.domain, field.domain.mass * field.values)


def h1_norm(domain, values):
    """sqrt(v' (L + M) v)."""
    v = np.asarray(values, dtype=float)
    return float(np.sqrt(max(v @ (domain.stiffness @ v) + v @ (domain.mass * v), 0.0)))


def solve_T(problem, psi, tol=1e-10, x0=None):
    """Solve A u = psi by Jacobi-preconditioned conjugate gradients.

    Stops when ||A u - psi||_2 <= tol * ||psi||_2 (absolute when psi = 0).
    The recorded energy history is non-increasing by construction: each
    step subtracts the exact CG decrement alpha * (r'z) / 2 >= 0.
    """
    _require_same_domain(problem.domain, psi)
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    A = problem.system_matrix
    b = psi.values
    n = b.size
    if x0 is None:
        x = np.zeros(n)
        Ax = np.zeros(n)
    else:
        _require_same_domain(problem.domain, x0)
        x = x0.values.copy()
        Ax = A @ x
    diag = A.diagonal()

    bnorm = np.linalg.norm(b)
    stop = tol * bnorm if bnorm > 0.0 else tol
    cap = 10 * n

    r = b - Ax
    energy = 0.5 * (x @ Ax) - x @ b
    history = [float(energy)]
    iterations = 0
    resid = np.linalg.norm(r)

    while True:
        # inner CG sweep on the recurrence residual
        if resid > stop:
            z = r / diag
            rz = r @ z
            p = z
            while resid > stop:
                if iterations >= cap:
                    report = SolveReport(iterations, float(resid), history)
                    raise ConvergenceError(
                        f"no convergence in {cap} iterations "
                        f"(residual {resid:.3e}, target {stop:.3e}); "
                        "a may be near-singular or badly conditioned",
                        report,
                    )
                Ap = A @ p
                pAp = p @ Ap
                if pAp <= 0.0:
                    report = SolveReport(iterations, float(resid), history)
                    raise ConvergenceError(
                        "conjugate-gradient breakdown: system matrix not positive "
                        "definite",
                        report,
                    )
                alpha = rz / pAp
                x += alpha * p
                r -= alpha * Ap
                energy -= 0.5 * alpha * rz
                history.append(float(energy))
                iterations += 1
                z = r / diag
                rz_new = r @ z
                beta = rz_new / rz
                rz = rz_new
                p = z + beta * p
                resid = np.linalg.norm(r)
        # the recurrence residual can drift from the true one; re-check
        r = b - A @ x
        resid = np.linalg.norm(r)
        if resid <= stop:
            break
        if iterations >= cap:
            report = SolveReport(iterations, float(resid), history)
            raise ConvergenceError(
                f"no convergence in {cap} iterations (residual {resid:.3e})",
                report,
            )

    report = SolveReport(iterations, float(resid), history)
    return Field(problem.domain, x), report


def check_comparison(problem, psi1, psi2, tol=1e-10):
    """Ordered right-hand sides give ordered solutions.

    Requires psi1 <= psi2 entrywise (anything else is an input error, not
    a False) and an M-matrix compatible domain.
    """
    _require_same_domain(problem.domain, psi1)
    _require_same_domain(problem.domain, psi2)
    if np.any(psi1.values > psi2.values):
        raise ValueError("psi1 <= psi2 entrywise is required")
    if not mesh_quality(problem.domain).is_m_matrix_compatible:
        raise ValueError(
            "domain is not M-matrix compatible; comparison is not trusted here"
        )
    u1, _ = solve_T(problem, psi1, tol=tol)
    u2, _ = solve_T(problem, psi2, tol=tol)
    slack = 1e-9 * float(np.abs(u2.values).max())
    return bool(np.all(u1.values <= u2.values + slack))


def lipschitz_certificate(problem, psi1, psi2, tol=1e-12):
    """Return (lhs, rhs) of ||u1 - u2||_H1 <= (1/C) ||psi1 - psi2||_*.

    The dual norm ||r||_*^2 = r' (L+M)^{-1} r is computed densely, so the
    domain is capped at 2000 vertices.
    """
    n = problem.domain.vertex_count
    if n > 2000:
        raise ValueError(f"domain too large for dense dual norm ({n} > 2000 vertices)")
    _require_same_domain(problem.domain, psi1)
    _require_same_domain(problem.domain, psi2)
    from scipy.linalg import cho_factor, cho_solve

    u1, _ = solve_T(problem, psi1, tol=tol)
    u2, _ = solve_T(problem, psi2, tol=tol)
    d = u1.values - u2.values
    lhs = h1_norm(problem.domain, d)
    r = psi1.values - psi2.values
    w = cho_solve(cho_factor(problem.h1_matrix.toarray()), r)
    rhs = float(np.sqrt(max(r @ w, 0.0))) / problem.coercivity_constant
    return lhs, rhs
