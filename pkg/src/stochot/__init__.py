"""Exact optimal transport and duality checks for finite scenario families."""

__version__ = "0.1.0"

from .core import (
    DualPair,
    FiniteMetricSpace,
    Scenario,
    StochasticInstance,
    StochasticPlan,
    load_instance,
    load_plan,
    plan_cost,
    reference_instance,
    validate_instance,
)
from .duality import (
    assemble_stochastic_duals,
    dual_value,
    lipschitz_smooth_cost,
    verify_duality_gap,
)
from .geometry import (
    c_subdifferential,
    c_transform,
    check_cyclical_monotonicity,
    improve_along_cycle,
    rockafellar_potential,
    verify_equivalence,
)
from .kernel_metric import KernelPairInstance, kr_dual_w1, wasserstein_p
from .ot_solver import brute_force_value, extract_duals, solve_transport
from .stochastic import is_feasible_kernel_plan, solve_stochastic, stochastic_cost

__all__ = [
    "DualPair",
    "FiniteMetricSpace",
    "KernelPairInstance",
    "Scenario",
    "StochasticInstance",
    "StochasticPlan",
    "assemble_stochastic_duals",
    "brute_force_value",
    "c_subdifferential",
    "c_transform",
    "check_cyclical_monotonicity",
    "dual_value",
    "extract_duals",
    "improve_along_cycle",
    "is_feasible_kernel_plan",
    "kr_dual_w1",
    "lipschitz_smooth_cost",
    "load_instance",
    "load_plan",
    "plan_cost",
    "reference_instance",
    "rockafellar_potential",
    "solve_stochastic",
    "solve_transport",
    "stochastic_cost",
    "validate_instance",
    "verify_duality_gap",
    "verify_equivalence",
    "wasserstein_p",
]
