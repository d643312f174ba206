"""Scenario-wise solution of the stochastic transport problem.

There are no constraints linking scenarios, so the optimal stochastic plan is
just the per-scenario optimal couplings and its value is the weighted sum of
per-scenario optimal costs. Aggregation always runs in scenario order, which
keeps the floating-point result reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    DimensionError,
    StochasticInstance,
    StochasticPlan,
    StochotError,
    Violation,
    coupling_violations,
    plan_cost,
)
from .ot_solver import SolveResult, solve_transport


class ScenarioError(StochotError):
    """A per-scenario failure, tagged with the scenario index."""

    def __init__(self, index: int, cause: Exception):
        super().__init__(f"scenario {index}: {cause}")
        self.index = index
        self.cause = cause


@dataclass(frozen=True)
class StochasticSolveResult:
    plan: StochasticPlan
    value: float
    per_scenario_values: tuple[float, ...]
    solves: tuple[SolveResult, ...]


def weighted_sum(weights, values) -> float:
    """``sum w_k * v_k`` accumulated left to right in scenario order."""
    total = 0.0
    for w, v in zip(weights, values):
        total += w * v
    return total


def solve_stochastic(inst: StochasticInstance) -> StochasticSolveResult:
    solves = []
    for k, sc in enumerate(inst.scenarios):
        try:
            solves.append(solve_transport(sc.cost, sc.mu, sc.nu))
        except StochotError as exc:
            raise ScenarioError(k, exc) from exc
        except ValueError as exc:
            raise ScenarioError(k, exc) from exc
    values = tuple(r.value for r in solves)
    return StochasticSolveResult(
        plan=StochasticPlan(tuple(r.coupling for r in solves)),
        value=weighted_sum(inst.weights, values),
        per_scenario_values=values,
        solves=tuple(solves),
    )


def _check_plan_shape(inst: StochasticInstance, plan: StochasticPlan) -> None:
    if len(plan) != len(inst.scenarios):
        raise DimensionError(f"plan has {len(plan)} couplings for {len(inst.scenarios)} scenarios")
    for k, (sc, pi) in enumerate(zip(inst.scenarios, plan.couplings)):
        if pi.shape != sc.cost.shape:
            raise DimensionError(f"scenario {k}: coupling shape {pi.shape} != {sc.cost.shape}")


def scenario_costs(inst: StochasticInstance, plan: StochasticPlan) -> tuple[float, ...]:
    _check_plan_shape(inst, plan)
    return tuple(plan_cost(sc.cost, pi) for sc, pi in zip(inst.scenarios, plan.couplings))


def stochastic_cost(inst: StochasticInstance, plan: StochasticPlan) -> float:
    """Expected transport cost of ``plan`` under the scenario weights."""
    return weighted_sum(inst.weights, scenario_costs(inst, plan))


def is_feasible_kernel_plan(
    inst: StochasticInstance, plan: StochasticPlan
) -> tuple[bool, list[Violation]]:
    if len(plan) != len(inst.scenarios):
        return False, [
            Violation("couplings", f"{len(plan)} couplings for {len(inst.scenarios)} scenarios")
        ]
    violations: list[Violation] = []
    for k, (sc, pi) in enumerate(zip(inst.scenarios, plan.couplings)):
        violations += coupling_violations(pi, sc.mu, sc.nu, where=f"scenarios[{k}]")
    return not violations, violations


def product_plan(inst: StochasticInstance) -> StochasticPlan:
    return StochasticPlan(tuple(np.outer(sc.mu, sc.nu) for sc in inst.scenarios))
