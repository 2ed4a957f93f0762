"""Sub/supersolution machinery for semilinear elliptic equations on
discrete compact manifolds.

The pieces, bottom up:

- :mod:`subsup.geometry` builds discrete domains (icosphere surfaces, flat
  tori, OFF meshes) and assembles stiffness/mass operators.
- :mod:`subsup.linear_operator` solves the coercive linear problem and
  certifies comparison, coercivity, and Lipschitz bounds.
- :mod:`subsup.nonlinearity` holds the scalar nonlinearities, the growth
  and sign hypothesis checks, and the substitution operator S.
- :mod:`subsup.iteration` verifies lower/upper solution brackets and runs
  the monotone iteration to the minimal/maximal solutions.
- :mod:`subsup.scenario` reads problem descriptions from JSON files.
- :mod:`subsup.cli` exposes all of it as ``subsup check/solve/spectrum/
  mesh-info``.
"""

from .expressions import ExpressionError, evaluate_expression, parse_coefficient
from .geometry import (
    AssemblyError,
    DiscreteDomain,
    Field,
    MeshQualityReport,
    build_flat_torus,
    build_icosphere,
    generalized_spectrum,
    load_off,
    mesh_quality,
)
from .iteration import (
    Bracket,
    BracketError,
    IterationTrace,
    OrderingError,
    SolutionPair,
    StepRecord,
    defect,
    iterate_monotone,
    make_bracket,
    positivity_check,
    verify_lower,
    verify_upper,
)
from .linear_operator import (
    ConvergenceError,
    DualVector,
    LinearProblem,
    SolveReport,
    check_comparison,
    embed_function,
    h1_norm,
    lipschitz_certificate,
    solve_T,
)
from .nonlinearity import (
    Alpha1Report,
    Alpha2Report,
    NonlinearProblem,
    ScalarNonlinearity,
    apply_S,
    check_alpha1,
    check_alpha2,
    critical_exponent,
)
from .scenario import (
    Scenario,
    ScenarioError,
    build_domain,
    build_problem,
    load_scenario,
    parse_scenario,
    serialize_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "Alpha1Report",
    "Alpha2Report",
    "AssemblyError",
    "Bracket",
    "BracketError",
    "ConvergenceError",
    "DiscreteDomain",
    "DualVector",
    "ExpressionError",
    "Field",
    "IterationTrace",
    "LinearProblem",
    "MeshQualityReport",
    "NonlinearProblem",
    "OrderingError",
    "Scenario",
    "ScenarioError",
    "ScalarNonlinearity",
    "SolutionPair",
    "SolveReport",
    "StepRecord",
    "apply_S",
    "build_domain",
    "build_flat_torus",
    "build_icosphere",
    "build_problem",
    "check_alpha1",
    "check_alpha2",
    "check_comparison",
    "critical_exponent",
    "defect",
    "embed_function",
    "evaluate_expression",
    "generalized_spectrum",
    "h1_norm",
    "iterate_monotone",
    "lipschitz_certificate",
    "load_off",
    "load_scenario",
    "make_bracket",
    "mesh_quality",
    "parse_coefficient",
    "parse_scenario",
    "positivity_check",
    "serialize_scenario",
    "solve_T",
    "verify_lower",
    "verify_upper",
]
