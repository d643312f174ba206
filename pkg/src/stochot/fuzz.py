"""Seeded random instances, plans, potentials and kernels.

Costs are uniform on [0, 1] rounded to 6 decimals. Probability vectors come
from normalised exponentials, rounded to whole multiples of 1e-6 by largest
remainder so every vector sums to one up to a single rounding.
"""

from __future__ import annotations

import numpy as np

from .core import (
    DualPair,
    FiniteMetricSpace,
    Scenario,
    StochasticInstance,
    StochasticPlan,
)
from .geometry import c_transform
from .kernel_metric import KernelPairInstance
from .ot_solver import northwest_corner

UNITS = 1_000_000


def rng_for(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def random_probability(rng: np.random.Generator, k: int, positive: bool = False) -> np.ndarray:
    raw = rng.exponential(size=k)
    share = raw / raw.sum() * UNITS
    if positive:
        share = share * (UNITS - k) / UNITS
    counts = np.floor(share).astype(np.int64)
    # largest remainder, ties broken by index
    short = UNITS - (k if positive else 0) - int(counts.sum())
    order = np.argsort(-(share - counts), kind="stable")
    counts[order[:short]] += 1
    if positive:
        counts += 1
    return counts / UNITS


def random_space(rng: np.random.Generator, k: int, prefix: str) -> FiniteMetricSpace:
    """Points in the unit square with Euclidean distances."""
    while True:
        pts = np.round(rng.random((k, 2)), 6)
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
        if k == 1 or dist[~np.eye(k, dtype=bool)].min() > 0:
            return FiniteMetricSpace(tuple(f"{prefix}{i + 1}" for i in range(k)), dist)


def random_cost(rng: np.random.Generator, nx: int, ny: int) -> np.ndarray:
    return np.round(rng.random((nx, ny)), 6)


def random_instance(seed, nx: int, ny: int, scenarios: int) -> StochasticInstance:
    rng = rng_for(seed)
    X = random_space(rng, nx, "x")
    Y = random_space(rng, ny, "y")
    weights = random_probability(rng, scenarios, positive=True)
    scs = tuple(
        Scenario(w, random_cost(rng, nx, ny), random_probability(rng, nx), random_probability(rng, ny))
        for w in weights
    )
    return StochasticInstance(X, Y, scs)


def random_vertex_coupling(rng: np.random.Generator, mu, nu) -> np.ndarray:
    """Northwest-corner vertex after a random reordering of rows and columns."""
    flow, _ = northwest_corner(mu, nu, rng.permutation(len(mu)), rng.permutation(len(nu)))
    return flow


def random_feasible_coupling(rng: np.random.Generator, mu, nu, vertices: int = 3) -> np.ndarray:
    """Random convex combination of the product coupling and a few vertex couplings."""
    parts = [np.outer(mu, nu)] + [random_vertex_coupling(rng, mu, nu) for _ in range(vertices)]
    lam = rng.dirichlet(np.ones(len(parts)))
    # occasionally land exactly on a vertex or on the product plan
    if rng.random() < 0.2:
        lam = np.eye(len(parts))[rng.integers(len(parts))]
    return sum(l * p for l, p in zip(lam, parts))


def random_feasible_plan(rng: np.random.Generator, inst: StochasticInstance) -> StochasticPlan:
    return StochasticPlan(
        tuple(random_feasible_coupling(rng, sc.mu, sc.nu) for sc in inst.scenarios)
    )


def random_vertex_plan(rng: np.random.Generator, inst: StochasticInstance) -> StochasticPlan:
    return StochasticPlan(
        tuple(random_vertex_coupling(rng, sc.mu, sc.nu) for sc in inst.scenarios)
    )


def random_feasible_dual(rng: np.random.Generator, inst: StochasticInstance) -> DualPair:
    """Random ``psi`` with ``phi`` at or below its c-transform, so ``phi - psi <= c``."""
    psis, phis = [], []
    for sc in inst.scenarios:
        psi = rng.normal(scale=2.0, size=sc.cost.shape[0])
        phi = c_transform(sc.cost, psi) - rng.exponential(0.5, size=sc.cost.shape[1]) * (
            rng.random(sc.cost.shape[1]) < 0.5
        )
        psis.append(psi)
        phis.append(phi)
    return DualPair(tuple(psis), tuple(phis))


def random_kernel(rng: np.random.Generator, size: int, scenarios: int) -> tuple[np.ndarray, ...]:
    return tuple(random_probability(rng, size) for _ in range(scenarios))


def random_pair(seed, size: int, scenarios: int, p: float = 1.0) -> KernelPairInstance:
    rng = rng_for(seed)
    space = random_space(rng, size, "z")
    weights = random_probability(rng, scenarios, positive=True)
    return KernelPairInstance(
        space, weights, random_kernel(rng, size, scenarios), random_kernel(rng, size, scenarios), p
    )
