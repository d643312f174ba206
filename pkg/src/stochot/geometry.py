"""Cyclical monotonicity, c-convex potentials and optimality certificates.

Index conventions: a support is a sorted list of ``(x, y)`` index pairs; a
cycle ``(x_1, y_1), ..., (x_N, y_N)`` has defect
``sum c(x_i, y_{i+1}) - sum c(x_i, y_i)`` with ``y_{N+1} = y_1``, so a negative
defect means rerouting mass along the cycle is cheaper.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .core import (
    FEAS_TOL,
    SUPPORT_TOL,
    StochasticInstance,
    StochasticPlan,
    StochotError,
    plan_cost,
)
from .stochastic import solve_stochastic, stochastic_cost

DEFAULT_MAX_CYCLE_LEN = 8
CYCLE_TOL = 1e-9

Pair = tuple[int, int]


class GeometryError(StochotError):
    pass


class NonMonotoneSupportError(GeometryError):
    """The support admits a cost-reducing cycle, so no finite potential exists."""

    def __init__(self, cycle: "Cycle"):
        super().__init__(
            f"support is not c-cyclically monotone: cycle {list(cycle.pairs)} "
            f"has defect {cycle.defect!r}"
        )
        self.cycle = cycle


class DegenerateCycleError(GeometryError):
    pass


class InfeasiblePotentialsError(GeometryError):
    pass


@dataclass(frozen=True)
class Cycle:
    pairs: tuple[Pair, ...]
    defect: float


def default_max_cycle_len() -> int:
    raw = os.environ.get("KT_MAX_CYCLE_LEN")
    return int(raw) if raw else DEFAULT_MAX_CYCLE_LEN


def support_of(coupling, threshold: float = SUPPORT_TOL) -> list[Pair]:
    pi = np.asarray(coupling, dtype=float)
    return [(int(i), int(j)) for i, j in np.argwhere(pi > threshold)]


def _normalize_support(support: Iterable[Pair]) -> list[Pair]:
    return sorted({(int(i), int(j)) for i, j in support})


def cycle_defect(cost, pairs) -> float:
    cost = np.asarray(cost, dtype=float)
    N = len(pairs)
    return sum(
        cost[pairs[i][0], pairs[(i + 1) % N][1]] - cost[pairs[i][0], pairs[i][1]]
        for i in range(N)
    )


def check_cyclical_monotonicity(
    cost, support: Iterable[Pair], max_len: Optional[int] = None, tol: float = CYCLE_TOL
) -> Optional[Cycle]:
    """Most negative cycle of length ``<= max_len`` with defect below ``-tol``.

    The search runs over cycles whose points have pairwise distinct ``x`` and
    pairwise distinct ``y``. Any cycle repeating a point splits into shorter
    cycles whose defects add up to the original, so a violation exists iff one
    exists in this family. Cycles are enumerated depth-first from their
    smallest pair, which fixes one representative per rotation.
    """
    if max_len is None:
        max_len = default_max_cycle_len()
    if max_len < 2:
        raise ValueError("max_len must be at least 2")
    pairs = _normalize_support(support)
    c = np.asarray(cost, dtype=float).tolist()
    best: Optional[tuple[float, tuple[Pair, ...]]] = None

    # partial = sum of c(x_i, y_{i+1}) - c(x_i, y_i) over the closed steps so far
    def extend(path, used_x, used_y, partial):
        nonlocal best
        x0, y0 = pairs[path[0]]
        xl, yl = pairs[path[-1]]
        if len(path) >= 2:
            defect = partial + c[xl][y0] - c[xl][yl]
            if defect < -tol and (best is None or defect < best[0]):
                best = (defect, tuple(pairs[k] for k in path))
        if len(path) == max_len:
            return
        for k in range(path[0] + 1, len(pairs)):
            x, y = pairs[k]
            if x in used_x or y in used_y:
                continue
            path.append(k)
            used_x.add(x)
            used_y.add(y)
            extend(path, used_x, used_y, partial + c[xl][y] - c[xl][yl])
            path.pop()
            used_x.discard(x)
            used_y.discard(y)

    for start in range(len(pairs)):
        x, y = pairs[start]
        extend([start], {x}, {y}, 0.0)
    if best is None:
        return None
    return Cycle(best[1], best[0])


def improve_along_cycle(coupling, cycle: Cycle):
    """Shift the largest admissible mass around a negative cycle.

    Mass ``theta = min pi(x_i, y_i)`` leaves every cycle pair and enters
    ``(x_i, y_{i+1})``; row and column sums are unchanged and the cost drops by
    ``theta * |defect|``. Works on float or object (e.g. ``Fraction``) arrays.
    """
    pi = np.array(coupling, dtype=object if np.asarray(coupling).dtype == object else float)
    if not cycle.defect < 0:
        raise ValueError(f"cycle defect {cycle.defect!r} is not negative")
    pairs = cycle.pairs
    for p in pairs:
        if not pi[p] > 0:
            raise ValueError(f"cycle pair {p} is not in the support of the coupling")
    theta = min(pi[p] for p in pairs)
    if not theta > SUPPORT_TOL:
        raise DegenerateCycleError(f"cycle carries no mass (theta = {theta!r})")
    N = len(pairs)
    for i, (x, y) in enumerate(pairs):
        pi[x, y] -= theta
        pi[x, pairs[(i + 1) % N][1]] += theta
    return pi


def _trace_cycle(pred, start):
    """Follow predecessor links from ``start`` until an x-node repeats."""
    seen = []
    x = start
    while x not in seen:
        if x not in pred:
            return None
        seen.append(x)
        x = pred[x][0]
    return seen[seen.index(x):]


def rockafellar_potential(cost, support: Iterable[Pair], anchor: Optional[Pair] = None):
    """c-convex potential built from chains through a c-cyclically monotone support.

    ``psi(x)`` is the supremum over chains ``(x_1, y_1), ..., (x_m, y_m)`` of
    support pairs, started at the anchor, of
    ``[c(a) - c(x_1, a_y)] + [c(x_1, y_1) - c(x_2, y_1)] + ... + [c(x_m, y_m) - c(x, y_m)]``.
    It is a longest-path problem on the support pairs, solved by Bellman
    iteration; the anchor is pinned at ``psi(a_x) = 0`` and any further
    improvement after ``|support|`` rounds exposes a cost-reducing cycle.
    """
    c = np.asarray(cost, dtype=float)
    pairs = _normalize_support(support)
    if not pairs:
        raise ValueError("empty support")
    if anchor is None:
        anchor = pairs[0]
    anchor = (int(anchor[0]), int(anchor[1]))
    if anchor not in pairs:
        raise ValueError(f"anchor {anchor} is not in the support")
    m = c.shape[0]
    xs = np.array([p[0] for p in pairs])
    ys = np.array([p[1] for p in pairs])
    # gain[k, x]: value added when the chain passes through pair k and lands on x
    gain = c[xs, ys][:, None] - c[:, ys].T
    ax = anchor[0]

    psi = np.full(m, -np.inf)
    psi[ax] = 0.0
    pred: dict[int, Pair] = {}
    for _ in range(len(pairs) + 1):
        cand = psi[xs][:, None] + gain
        k_best = np.argmax(cand, axis=0)
        new = cand[k_best, np.arange(m)]
        improved = new > psi + CYCLE_TOL
        improved[ax] = False
        if new[ax] > CYCLE_TOL:
            pred[ax] = pairs[int(k_best[ax])]
            _raise_cycle(c, pairs, pred, ax)
        if not improved.any():
            # keep sub-tolerance gains too; they are rounding, not a cycle
            upd = new > psi
            upd[ax] = False
            psi = np.where(upd, new, psi)
            break
        for x in np.flatnonzero(improved):
            pred[int(x)] = pairs[int(k_best[x])]
        psi = np.where(improved, new, psi)
    else:
        x = int(np.flatnonzero(improved)[0])
        _raise_cycle(c, pairs, pred, x)
    return psi


def _raise_cycle(c, pairs, pred, x):
    # pred[x] = pair (x', y') whose step x' -> x last raised psi(x); a loop of
    # such steps has positive total gain, which is a negative defect when the
    # pairs are read in the order the walk visits them
    loop = _trace_cycle(pred, x)
    if loop is not None:
        steps = tuple(pred[z] for z in loop)
        cycle = min(
            (Cycle(steps, cycle_defect(c, steps)),
             Cycle(steps[::-1], cycle_defect(c, steps[::-1]))),
            key=lambda cy: cy.defect,
        )
        if cycle.defect < 0:
            raise NonMonotoneSupportError(cycle)
    cycle = check_cyclical_monotonicity(c, pairs, max_len=len(pairs), tol=0.0)
    raise NonMonotoneSupportError(cycle or Cycle(tuple(pairs), float("nan")))


def c_transform(cost, psi) -> np.ndarray:
    """``phi(y) = min_x psi(x) + c(x, y)``."""
    c = np.asarray(cost, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if not np.all(np.isfinite(psi)):
        raise ValueError("psi must be finite")
    return (psi[:, None] + c).min(axis=0)


def c_double_transform(cost, phi) -> np.ndarray:
    """``psi(x) = max_y phi(y) - c(x, y)``."""
    c = np.asarray(cost, dtype=float)
    return (np.asarray(phi, dtype=float)[None, :] - c).max(axis=1)


def c_subdifferential(cost, psi, phi, tol: float = FEAS_TOL) -> list[Pair]:
    """Pairs where ``phi(y) - psi(x) = c(x, y)`` within ``tol``."""
    c = np.asarray(cost, dtype=float)
    gap = np.asarray(phi, dtype=float)[None, :] - np.asarray(psi, dtype=float)[:, None] - c
    if gap.max() > tol:
        i, j = np.unravel_index(int(np.argmax(gap)), gap.shape)
        raise InfeasiblePotentialsError(
            f"phi - psi exceeds cost by {gap[i, j]!r} at ({i}, {j})"
        )
    return [(int(i), int(j)) for i, j in np.argwhere(np.abs(gap) <= tol)]


# ---------------------------------------------------------------- optimality report


@dataclass
class ScenarioCheck:
    index: int
    optimal: bool
    monotone: bool
    certified: bool
    cost: float
    optimum: float
    witness: Optional[Cycle] = None
    psi: Optional[np.ndarray] = None
    phi: Optional[np.ndarray] = None
    note: str = ""

    @property
    def consistent(self) -> bool:
        return self.optimal == self.monotone == self.certified


@dataclass
class EquivalenceReport:
    scenarios: list[ScenarioCheck] = field(default_factory=list)
    optimal: bool = False
    monotone: bool = False
    certified: bool = False
    cost: float = 0.0
    optimum: float = 0.0

    @property
    def defects(self) -> list[str]:
        out = [
            f"scenario {s.index}: optimal={s.optimal} monotone={s.monotone} "
            f"certified={s.certified}"
            for s in self.scenarios
            if not s.consistent
        ]
        if not self.optimal == self.monotone == self.certified:
            out.append(
                f"aggregate: optimal={self.optimal} monotone={self.monotone} "
                f"certified={self.certified}"
            )
        return out

    @property
    def consistent(self) -> bool:
        return not self.defects


def certify_support(cost, support, nu=None, tol: float = FEAS_TOL):
    """Potentials certifying ``support``, or ``None`` if it is not c-cyclically monotone.

    Returns ``(psi, phi, ok)`` where ``ok`` says ``phi - psi <= c`` everywhere and
    equality holds on every support pair whose ``y`` carries mass.
    """
    try:
        psi = rockafellar_potential(cost, support)
    except NonMonotoneSupportError:
        return None, None, False
    phi = c_transform(cost, psi)
    try:
        gamma = set(c_subdifferential(cost, psi, phi, tol))
    except InfeasiblePotentialsError:
        return psi, phi, False
    needed = [p for p in support if nu is None or nu[p[1]] > 0]
    return psi, phi, all(p in gamma for p in needed)


def verify_equivalence(
    inst: StochasticInstance,
    plan: StochasticPlan,
    max_len: Optional[int] = None,
    tol: float = FEAS_TOL,
) -> EquivalenceReport:
    """Check optimality, cyclical monotonicity and the potential certificate of a plan.

    All three are computed independently per scenario; a disagreement between
    them is listed in ``report.defects``.
    """
    if max_len is None:
        max_len = default_max_cycle_len()
    opt = solve_stochastic(inst)
    report = EquivalenceReport()
    for k, (sc, pi) in enumerate(zip(inst.scenarios, plan.couplings)):
        supp = support_of(pi)
        cost_k = plan_cost(sc.cost, pi)
        optimal = cost_k <= opt.per_scenario_values[k] + tol
        witness = None
        if len(supp) >= 2:
            witness = check_cyclical_monotonicity(sc.cost, supp, min(len(supp), max_len))
        if supp:
            psi, phi, certified = certify_support(sc.cost, supp, sc.nu, tol)
        else:
            psi = phi = None
            certified = False
        report.scenarios.append(
            ScenarioCheck(
                index=k,
                optimal=bool(optimal),
                monotone=witness is None,
                certified=bool(certified),
                cost=cost_k,
                optimum=opt.per_scenario_values[k],
                witness=witness,
                psi=psi,
                phi=phi,
            )
        )
    report.cost = stochastic_cost(inst, plan)
    report.optimum = opt.value
    report.optimal = report.cost <= opt.value + tol
    report.monotone = all(s.monotone for s in report.scenarios)
    report.certified = all(s.certified for s in report.scenarios)
    return report


def check_plan_concentration(
    inst: StochasticInstance,
    reference_gamma: list[Iterable[Pair]],
    other_plan: StochasticPlan,
    tol: float = FEAS_TOL,
) -> bool:
    """True iff every coupling of ``other_plan`` puts at most ``tol`` mass outside Γ."""
    for gamma, pi in zip(reference_gamma, other_plan.couplings):
        mask = np.ones(pi.shape, dtype=bool)
        for p in gamma:
            mask[p] = False
        if pi[mask].clip(min=0).sum() > tol:
            return False
    return True


def concentration_sets(inst: StochasticInstance, plan: StochasticPlan, tol: float = FEAS_TOL):
    """Per-scenario Γ = c-subdifferential of the potentials built from ``plan``'s support."""
    out = []
    for sc, pi in zip(inst.scenarios, plan.couplings):
        psi = rockafellar_potential(sc.cost, support_of(pi))
        phi = c_transform(sc.cost, psi)
        out.append(c_subdifferential(sc.cost, psi, phi, tol))
    return out
