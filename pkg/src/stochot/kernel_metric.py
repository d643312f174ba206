"""Wasserstein distance between probability kernels on a finite metric space.

A kernel here is a weighted list of probability vectors, one per scenario,
all on the same space and sharing the same scenario weights. The kernel
distance aggregates per-scenario transport costs under ``d**p``:
``W_p(mu, nu) = (sum_k w_k W_p(mu_k, nu_k)**p) ** (1/p)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .core import (
    FEAS_TOL,
    INPUT_TOL,
    FiniteMetricSpace,
    InstanceFormatError,
    Scenario,
    StochasticInstance,
    StochotError,
    ValidationReport,
    _expect,
    _matrix,
    _number,
    _require,
    _validate_probability,
    _validate_space,
    _vector,
    space_from_dict,
    space_to_dict,
)
from .ot_solver import solve_transport
from .stochastic import weighted_sum


class KernelMismatchError(StochotError, ValueError):
    pass


@dataclass(frozen=True)
class KernelPairInstance:
    space: FiniteMetricSpace
    weights: np.ndarray
    mu: tuple[np.ndarray, ...]
    nu: tuple[np.ndarray, ...]
    p: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "mu", tuple(np.asarray(v, dtype=float) for v in self.mu))
        object.__setattr__(self, "nu", tuple(np.asarray(v, dtype=float) for v in self.nu))
        object.__setattr__(self, "p", float(self.p))

    def with_p(self, p: float) -> "KernelPairInstance":
        return KernelPairInstance(self.space, self.weights, self.mu, self.nu, p)

    def swapped(self) -> "KernelPairInstance":
        return KernelPairInstance(self.space, self.weights, self.nu, self.mu, self.p)

    def ground_cost(self) -> np.ndarray:
        # no overflow guard beyond the double range
        return self.space.dist ** self.p

    def as_instance(self) -> StochasticInstance:
        """The stochastic transport instance with cost ``d**p`` in every scenario."""
        cost = self.ground_cost()
        return StochasticInstance(
            self.space,
            self.space,
            tuple(Scenario(w, cost, m, n) for w, m, n in zip(self.weights, self.mu, self.nu)),
        )


def validate_pair(pair: KernelPairInstance) -> ValidationReport:
    report = ValidationReport()
    _validate_space(pair.space, "space", report)
    if not (math.isfinite(pair.p) and pair.p >= 1.0):
        report.add("p", f"exponent {pair.p!r} must be a finite real >= 1")
    K = len(pair.weights)
    if K == 0:
        report.add("weights", "at least one scenario required")
    if len(pair.mu) != K or len(pair.nu) != K:
        report.add("mu/nu", f"need {K} vectors each, got {len(pair.mu)} and {len(pair.nu)}")
    for k, w in enumerate(pair.weights):
        if not 0.0 < w <= 1.0:
            report.add(f"weights[{k}]", f"weight {w!r} outside (0, 1]")
    total = math.fsum(pair.weights)
    if abs(total - 1.0) > INPUT_TOL:
        report.add("weights", f"weights sum {total!r} != 1")
    size = len(pair.space)
    for name, vecs in (("mu", pair.mu), ("nu", pair.nu)):
        for k, v in enumerate(vecs):
            if v.shape != (size,):
                report.add(f"{name}[{k}]", f"length {v.shape} != {size}")
            else:
                _validate_probability(v, f"{name}[{k}]", report)
    return report


def _canonical(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # solve (a, b) and (b, a) as the same problem so symmetry is exact
    return (a, b) if tuple(a.tolist()) <= tuple(b.tolist()) else (b, a)


def scenario_costs_p(pair: KernelPairInstance) -> tuple[float, ...]:
    """Per-scenario optimal cost under ``d**p``, i.e. ``W_p(mu_k, nu_k)**p``."""
    cost = pair.ground_cost()
    out = []
    for m, n in zip(pair.mu, pair.nu):
        a, b = _canonical(m, n)
        out.append(solve_transport(cost, a, b).value)
    return tuple(out)


def wasserstein_p(pair: KernelPairInstance) -> float:
    total = weighted_sum(pair.weights, scenario_costs_p(pair))
    return max(total, 0.0) ** (1.0 / pair.p)


def d_transform(dist, psi) -> np.ndarray:
    """``psi^d(y) = min_x psi(x) + d(x, y)``."""
    return (np.asarray(psi, dtype=float)[:, None] + np.asarray(dist, dtype=float)).min(axis=0)


def lipschitz_excess(dist, psi) -> float:
    """Largest ``|psi(x) - psi(x')| - d(x, x')``; nonpositive iff ``psi`` is 1-Lipschitz."""
    psi = np.asarray(psi, dtype=float)
    return float((np.abs(psi[:, None] - psi[None, :]) - dist).max())


@dataclass(frozen=True)
class KRResult:
    value: float
    witnesses: tuple[np.ndarray, ...]
    scenario_values: tuple[float, ...] = field(default=())


def kr_dual_w1(pair: KernelPairInstance) -> KRResult:
    """W_1 as a supremum of mean differences over 1-Lipschitz test functions.

    Per scenario the transport dual ``(u, v)`` under cost ``d`` is replaced by
    ``psi = u^d``; since ``u^d >= v`` and ``(u^d)^d = u^d <= u`` the objective
    ``nu . psi - mu . psi`` can only go up, and weak duality caps it at W_1.
    """
    if pair.p != 1.0:
        raise ValueError(f"Kantorovich-Rubinstein duality needs p = 1, got {pair.p!r}")
    d = pair.space.dist
    witnesses, values = [], []
    for m, n in zip(pair.mu, pair.nu):
        res = solve_transport(d, m, n)
        psi = d_transform(d, res.u)
        # a second transform is the identity on 1-Lipschitz functions; apply it
        # only if rounding left the first one short
        if lipschitz_excess(d, psi) > 0:
            psi = d_transform(d, psi)
        witnesses.append(psi)
        values.append(math.fsum(n * psi) - math.fsum(m * psi))
    return KRResult(weighted_sum(pair.weights, values), tuple(witnesses), tuple(values))


@dataclass
class MetricAxiomReport:
    d_mu_nu: float
    d_nu_mu: float
    d_mu_rho: float
    d_nu_rho: float
    d_mu_mu: float
    tol: float = FEAS_TOL

    @property
    def symmetric(self) -> bool:
        return abs(self.d_mu_nu - self.d_nu_mu) <= self.tol

    @property
    def symmetric_exact(self) -> bool:
        return self.d_mu_nu == self.d_nu_mu

    @property
    def identity(self) -> bool:
        return self.d_mu_mu <= self.tol

    @property
    def triangle(self) -> bool:
        return self.d_mu_rho <= self.d_mu_nu + self.d_nu_rho + self.tol

    @property
    def ok(self) -> bool:
        return self.symmetric and self.identity and self.triangle


def check_metric_axioms(
    space: FiniteMetricSpace,
    weights,
    mu: Sequence,
    nu: Sequence,
    rho: Sequence,
    p: float = 1.0,
) -> MetricAxiomReport:
    """Symmetry, identity and triangle inequality of the kernel distance on three kernels."""
    K = len(weights)
    if not (len(mu) == len(nu) == len(rho) == K):
        raise KernelMismatchError("the three kernels must have one vector per scenario")
    size = len(space)
    for name, ker in (("mu", mu), ("nu", nu), ("rho", rho)):
        for v in ker:
            if np.shape(v) != (size,):
                raise KernelMismatchError(f"{name} has a vector of length {np.shape(v)} != {size}")

    def dist(a, b):
        return wasserstein_p(KernelPairInstance(space, weights, a, b, p))

    return MetricAxiomReport(
        d_mu_nu=dist(mu, nu),
        d_nu_mu=dist(nu, mu),
        d_mu_rho=dist(mu, rho),
        d_nu_rho=dist(nu, rho),
        d_mu_mu=dist(mu, mu),
    )


# ---------------------------------------------------------------- pair files


def pair_from_dict(obj: Any) -> KernelPairInstance:
    _expect(obj, dict, "$")
    space = space_from_dict(_require(obj, "space", "$"), "space")
    weights = _vector(_require(obj, "weights", "$"), "weights")
    mu = _matrix(_require(obj, "mu", "$"), "mu")
    nu = _matrix(_require(obj, "nu", "$"), "nu")
    p = _number(obj["p"], "p") if "p" in obj else 1.0
    if mu.shape[0] != weights.size or nu.shape[0] != weights.size:
        raise InstanceFormatError("mu/nu", f"expected {weights.size} rows, one per weight")
    return KernelPairInstance(space, weights, tuple(mu), tuple(nu), p)


def pair_to_dict(pair: KernelPairInstance) -> dict:
    return {
        "space": space_to_dict(pair.space),
        "weights": pair.weights.tolist(),
        "mu": [v.tolist() for v in pair.mu],
        "nu": [v.tolist() for v in pair.nu],
        "p": pair.p,
    }
