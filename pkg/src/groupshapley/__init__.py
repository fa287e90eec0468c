"""Group Shapley decompositions of counterfactual changes in model outputs."""

from .coalition import (
    GroupPartition,
    UtilityTable,
    build_design_system,
    enumerate_proper_coalitions,
    kernel_weight,
)
from .errors import (
    CapacityError,
    ConfigError,
    ContractViolation,
    DomainError,
    GroupShapleyError,
    IncompleteTableError,
    SingularMatrixError,
    UnsupportedPatternError,
)
from .numsolve import LinearProgram, QuadraticProgram, SolveStatus, solve_linear_system, solve_lp, solve_qp
from .partial import (
    LinearConstraintSet,
    PartialInferenceResult,
    build_globalization_constraints,
    shapley_bound,
    shapley_minimum_norm,
)
from .roy import RoyParams, RoyScenario, SimConfig, simulate_panel, roy_counterfactual_value_function
from .shapley import (
    ShapleyResult,
    ValueFunction,
    affine_shapley_map,
    ceteris_paribus_decomposition,
    cls_shapley,
    exact_shapley_additive,
    exact_shapley_subtractive,
    marginal_value_function,
    permutation_oracle,
    sampled_shapley,
)

__version__ = "0.1.0"
