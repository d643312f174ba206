"""Stochastic Kantorovich duality on finite instances.

The dual objective of a pair of per-scenario potentials ``(psi, phi)`` with
``phi - psi <= c`` is ``E[nu . phi - mu . psi]``; it never exceeds the
expected cost of a feasible plan, and the potentials assembled from optimal
supports close the gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    FEAS_TOL,
    DimensionError,
    DualPair,
    FiniteMetricSpace,
    StochasticInstance,
    StochasticPlan,
    StochotError,
)
from .geometry import c_transform, rockafellar_potential, support_of
from .stochastic import (
    ScenarioError,
    is_feasible_kernel_plan,
    solve_stochastic,
    stochastic_cost,
    weighted_sum,
)


class InfeasiblePlanError(StochotError, ValueError):
    pass


class InfeasibleDualError(StochotError, ValueError):
    pass


@dataclass(frozen=True)
class GapReport:
    primal: float
    dual: float
    gap: float
    tol: float = FEAS_TOL

    @property
    def optimal(self) -> bool:
        return self.gap <= self.tol

    @property
    def weak_duality_holds(self) -> bool:
        return self.gap >= -self.tol


@dataclass(frozen=True)
class SmoothedCost:
    level: int
    cost_n: np.ndarray


def _check_dual_shape(inst: StochasticInstance, dual: DualPair) -> None:
    if len(dual.psi) != len(inst.scenarios) or len(dual.phi) != len(inst.scenarios):
        raise DimensionError("dual pair must hold one potential per scenario")
    for k, (sc, psi, phi) in enumerate(zip(inst.scenarios, dual.psi, dual.phi)):
        if psi.shape != sc.mu.shape or phi.shape != sc.nu.shape:
            raise DimensionError(f"scenario {k}: potential shapes {psi.shape}, {phi.shape}")


def scenario_dual_values(inst: StochasticInstance, dual: DualPair) -> tuple[float, ...]:
    _check_dual_shape(inst, dual)
    return tuple(
        math.fsum(sc.nu * phi) - math.fsum(sc.mu * psi)
        for sc, psi, phi in zip(inst.scenarios, dual.psi, dual.phi)
    )


def dual_value(inst: StochasticInstance, dual: DualPair) -> float:
    return weighted_sum(inst.weights, scenario_dual_values(inst, dual))


def dual_violation(inst: StochasticInstance, dual: DualPair) -> float:
    """Largest ``phi_k(y) - psi_k(x) - c_k(x, y)`` over all scenarios and pairs."""
    _check_dual_shape(inst, dual)
    return max(
        float((phi[None, :] - psi[:, None] - sc.cost).max())
        for sc, psi, phi in zip(inst.scenarios, dual.psi, dual.phi)
    )


def verify_duality_gap(
    inst: StochasticInstance, plan: StochasticPlan, dual: DualPair, tol: float = FEAS_TOL
) -> GapReport:
    ok, violations = is_feasible_kernel_plan(inst, plan)
    if not ok:
        raise InfeasiblePlanError("; ".join(str(v) for v in violations[:5]))
    excess = dual_violation(inst, dual)
    if excess > tol:
        raise InfeasibleDualError(f"phi - psi exceeds the cost by {excess!r}")
    primal = stochastic_cost(inst, plan)
    dual_v = dual_value(inst, dual)
    return GapReport(primal, dual_v, primal - dual_v, tol)


def assemble_stochastic_duals(inst: StochasticInstance, solved=None) -> DualPair:
    """Per-scenario potential from the optimal support, paired with its c-transform."""
    solved = solved or solve_stochastic(inst)
    psis, phis = [], []
    for k, (sc, pi) in enumerate(zip(inst.scenarios, solved.plan.couplings)):
        try:
            psi = rockafellar_potential(sc.cost, support_of(pi))
        except StochotError as exc:
            raise ScenarioError(k, exc) from exc
        psis.append(psi)
        phis.append(c_transform(sc.cost, psi))
    return DualPair(tuple(psis), tuple(phis))


# ---------------------------------------------------------------- Lipschitz smoothing


def _pair_distances(dX: FiniteMetricSpace, dY: FiniteMetricSpace) -> np.ndarray:
    """``D[x, y, x', y'] = d_X(x, x') + d_Y(y, y')``."""
    return dX.dist[:, None, :, None] + dY.dist[None, :, None, :]


def lipschitz_smooth_cost(cost, dX: FiniteMetricSpace, dY: FiniteMetricSpace, n: int) -> SmoothedCost:
    """Largest ``n``-Lipschitz minorant of ``min(cost, n)``.

    ``cost_n(x, y) = min over (x', y') of min(cost(x', y'), n) + n * (d_X(x, x') + d_Y(y, y'))``,
    evaluated by a direct double loop over pairs of cells.
    """
    if isinstance(n, bool) or int(n) != n or n <= 0:
        raise ValueError(f"smoothing level must be a positive integer, got {n!r}")
    n = int(n)
    c = np.asarray(cost, dtype=float)
    if c.shape != (len(dX), len(dY)):
        raise DimensionError(f"cost shape {c.shape} != ({len(dX)}, {len(dY)})")
    if not np.all(np.isfinite(c)) or np.any(c < 0):
        raise ValueError("cost must be finite and nonnegative")
    capped = np.minimum(c, n)
    D = _pair_distances(dX, dY)
    out = (capped[None, None, :, :] + n * D).min(axis=(2, 3))
    return SmoothedCost(n, out)


def lipschitz_constant(cost, dX: FiniteMetricSpace, dY: FiniteMetricSpace) -> float:
    """Smallest ``L`` with ``|c(x, y) - c(x', y')| <= L (d_X + d_Y)``."""
    c = np.asarray(cost, dtype=float)
    D = _pair_distances(dX, dY)
    diff = np.abs(c[:, :, None, None] - c[None, None, :, :])
    mask = D > 0
    return float((diff[mask] / D[mask]).max()) if mask.any() else 0.0


def sufficient_level(cost, dX: FiniteMetricSpace, dY: FiniteMetricSpace) -> int:
    """A level at which the smoothing reproduces ``cost`` exactly (not claimed tight)."""
    c = np.asarray(cost, dtype=float)
    n_star = max(float(c.max()), lipschitz_constant(c, dX, dY))
    return max(1, math.ceil(n_star))


def smoothing_violations(
    cost, smoothed: SmoothedCost, dX: FiniteMetricSpace, dY: FiniteMetricSpace,
    tol: float = 1e-12,
) -> list[str]:
    """Entrywise-bound and Lipschitz-bound violations of a smoothed cost."""
    c = np.asarray(cost, dtype=float)
    n = smoothed.level
    cn = smoothed.cost_n
    out = []
    over = cn - np.minimum(c, n)
    if over.max() > tol:
        out.append(f"cost_n exceeds min(cost, n) by {over.max()!r}")
    D = _pair_distances(dX, dY)
    lip = np.abs(cn[:, :, None, None] - cn[None, None, :, :]) - n * D
    if lip.max() > tol:
        out.append(f"cost_n breaks the {n}-Lipschitz bound by {lip.max()!r}")
    return out
