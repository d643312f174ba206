"""Domain types, invariant validation and instance file I/O.

Everything here works on small dense tables: a scenario is a cost matrix
over ``X x Y`` plus two probability vectors, and a stochastic instance is an
ordered list of weighted scenarios sharing the same two finite metric spaces.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

# Inputs are expected to be clean; computed plans accumulate rounding.
INPUT_TOL = 1e-12
FEAS_TOL = 1e-9
SUPPORT_TOL = 1e-12


class StochotError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(StochotError, ValueError):
    pass


class InstanceFormatError(StochotError, ValueError):
    """Malformed instance, plan or pair file. ``location`` is a JSON path."""

    def __init__(self, location: str, message: str):
        super().__init__(f"{location}: {message}")
        self.location = location
        self.message = message


@dataclass(frozen=True)
class FiniteMetricSpace:
    labels: tuple[str, ...]
    dist: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "dist", np.asarray(self.dist, dtype=float))

    def __len__(self) -> int:
        return len(self.labels)

    @classmethod
    def discrete(cls, labels: Sequence[str]) -> "FiniteMetricSpace":
        """All distinct points at distance one."""
        k = len(labels)
        return cls(tuple(labels), np.ones((k, k)) - np.eye(k))


@dataclass(frozen=True)
class Scenario:
    weight: float
    cost: np.ndarray
    mu: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weight", float(self.weight))
        object.__setattr__(self, "cost", np.asarray(self.cost, dtype=float))
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float))
        object.__setattr__(self, "nu", np.asarray(self.nu, dtype=float))


@dataclass(frozen=True)
class StochasticInstance:
    space_X: FiniteMetricSpace
    space_Y: FiniteMetricSpace
    scenarios: tuple[Scenario, ...]

    def __post_init__(self):
        object.__setattr__(self, "scenarios", tuple(self.scenarios))

    @property
    def weights(self) -> np.ndarray:
        return np.array([s.weight for s in self.scenarios])

    def with_scenarios(self, scenarios: Sequence[Scenario]) -> "StochasticInstance":
        return StochasticInstance(self.space_X, self.space_Y, tuple(scenarios))


@dataclass(frozen=True)
class StochasticPlan:
    """One coupling per scenario, in scenario order."""

    couplings: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "couplings", tuple(np.asarray(c, dtype=float) for c in self.couplings)
        )

    def __len__(self) -> int:
        return len(self.couplings)

    def __getitem__(self, k: int) -> np.ndarray:
        return self.couplings[k]


@dataclass(frozen=True)
class DualPair:
    """Per-scenario potentials with ``phi[k][y] - psi[k][x] <= cost_k[x, y]``."""

    psi: tuple[np.ndarray, ...]
    phi: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "psi", tuple(np.asarray(p, dtype=float) for p in self.psi))
        object.__setattr__(self, "phi", tuple(np.asarray(p, dtype=float) for p in self.phi))


@dataclass(frozen=True)
class Violation:
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.location}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, location: str, message: str) -> None:
        self.violations.append(Violation(location, message))

    def __bool__(self) -> bool:
        return self.ok


# ---------------------------------------------------------------- validation


def _validate_space(space: FiniteMetricSpace, where: str, report: ValidationReport) -> None:
    d = space.dist
    k = len(space.labels)
    if d.shape != (k, k):
        report.add(f"{where}.dist", f"shape {d.shape} does not match {k} labels")
        return
    if len(set(space.labels)) != k:
        report.add(f"{where}.labels", "duplicate labels")
    if not np.all(np.isfinite(d)):
        report.add(f"{where}.dist", "non-finite distance")
        return
    for i in range(k):
        if d[i, i] != 0.0:
            report.add(f"{where}.dist[{i}][{i}]", f"diagonal entry {d[i, i]!r} != 0")
        for j in range(i + 1, k):
            if d[i, j] != d[j, i]:
                report.add(f"{where}.dist[{i}][{j}]", "distance matrix not symmetric")
            if d[i, j] <= 0.0:
                report.add(f"{where}.dist[{i}][{j}]", "distinct points at nonpositive distance")
    # d[i, j] <= d[i, l] + d[l, j] for all triples
    excess = d[:, None, :] - d[:, :, None] - d[None, :, :]
    bad = np.argwhere(excess > INPUT_TOL * max(1.0, float(d.max(initial=0.0))))
    for i, l, j in bad[:5]:
        report.add(
            f"{where}.dist[{i}][{j}]",
            f"triangle inequality violated through point {l}",
        )


def _validate_probability(vec: np.ndarray, where: str, report: ValidationReport) -> None:
    if vec.ndim != 1:
        report.add(where, "not a vector")
        return
    if not np.all(np.isfinite(vec)):
        report.add(where, "non-finite mass")
        return
    for i in np.flatnonzero(vec < 0):
        report.add(f"{where}[{i}]", f"negative mass {vec[i]!r}")
    total = math.fsum(vec)
    if abs(total - 1.0) > INPUT_TOL:
        report.add(where, f"masses sum {total!r} != 1")


def validate_scenario(
    scenario: Scenario, nx: int, ny: int, where: str, report: ValidationReport
) -> None:
    if not 0.0 < scenario.weight <= 1.0:
        report.add(f"{where}.weight", f"weight {scenario.weight!r} outside (0, 1]")
    c = scenario.cost
    if c.shape != (nx, ny):
        report.add(f"{where}.cost", f"shape {c.shape} != ({nx}, {ny})")
    elif not np.all(np.isfinite(c)):
        report.add(f"{where}.cost", "non-finite cost")
    elif np.any(c < 0):
        i, j = np.argwhere(c < 0)[0]
        report.add(f"{where}.cost[{i}][{j}]", f"negative cost {c[i, j]!r}")
    if scenario.mu.shape != (nx,):
        report.add(f"{where}.mu", f"length {scenario.mu.shape} != {nx}")
    else:
        _validate_probability(scenario.mu, f"{where}.mu", report)
    if scenario.nu.shape != (ny,):
        report.add(f"{where}.nu", f"length {scenario.nu.shape} != {ny}")
    else:
        _validate_probability(scenario.nu, f"{where}.nu", report)


def validate_instance(inst: StochasticInstance) -> ValidationReport:
    """Collect every invariant violation of ``inst``; an empty report means valid."""
    report = ValidationReport()
    _validate_space(inst.space_X, "space_X", report)
    _validate_space(inst.space_Y, "space_Y", report)
    if not inst.scenarios:
        report.add("scenarios", "at least one scenario required")
        return report
    nx, ny = len(inst.space_X), len(inst.space_Y)
    for k, sc in enumerate(inst.scenarios):
        validate_scenario(sc, nx, ny, f"scenarios[{k}]", report)
    total = math.fsum(sc.weight for sc in inst.scenarios)
    if abs(total - 1.0) > INPUT_TOL:
        report.add("scenarios.weight", f"weights sum {total!r} != 1")
    return report


def coupling_violations(
    coupling: np.ndarray, mu: np.ndarray, nu: np.ndarray, where: str = "coupling",
    tol: float = FEAS_TOL,
) -> list[Violation]:
    """Marginal and sign violations of ``coupling`` against ``(mu, nu)``."""
    out: list[Violation] = []
    pi = np.asarray(coupling, dtype=float)
    if pi.shape != (len(mu), len(nu)):
        return [Violation(where, f"shape {pi.shape} != ({len(mu)}, {len(nu)})")]
    if not np.all(np.isfinite(pi)):
        return [Violation(where, "non-finite entry")]
    for i, j in np.argwhere(pi < -tol):
        out.append(Violation(f"{where}[{i}][{j}]", f"negative mass {pi[i, j]!r}"))
    for i in range(pi.shape[0]):
        s = math.fsum(pi[i])
        if abs(s - mu[i]) > tol:
            out.append(Violation(f"{where}.row[{i}]", f"row sum {s!r} != mu {mu[i]!r}"))
    for j in range(pi.shape[1]):
        s = math.fsum(pi[:, j])
        if abs(s - nu[j]) > tol:
            out.append(Violation(f"{where}.col[{j}]", f"column sum {s!r} != nu {nu[j]!r}"))
    return out


def plan_cost(scenario_or_cost, coupling) -> float:
    """Total cost ``sum c(x, y) pi(x, y)``, accumulated in row-major order."""
    cost = scenario_or_cost.cost if isinstance(scenario_or_cost, Scenario) else scenario_or_cost
    cost = np.asarray(cost, dtype=float)
    pi = np.asarray(coupling, dtype=float)
    if cost.shape != pi.shape:
        raise DimensionError(f"cost shape {cost.shape} != coupling shape {pi.shape}")
    return math.fsum((cost * pi).ravel())


# ---------------------------------------------------------------- reference data


def reference_instance() -> StochasticInstance:
    """Two scenarios on two-point spaces: a nontrivial LP and a zero-cost diagonal."""
    X = FiniteMetricSpace(("x1", "x2"), [[0.0, 1.0], [1.0, 0.0]])
    Y = FiniteMetricSpace(("y1", "y2"), [[0.0, 1.0], [1.0, 0.0]])
    w1 = Scenario(0.5, [[1.0, 2.0], [3.0, 1.0]], [0.3, 0.7], [0.6, 0.4])
    w2 = Scenario(0.5, [[0.0, 1.0], [1.0, 0.0]], [0.5, 0.5], [0.5, 0.5])
    return StochasticInstance(X, Y, (w1, w2))


# ---------------------------------------------------------------- JSON I/O


def _expect(obj, kind, where):
    if not isinstance(obj, kind):
        name = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise InstanceFormatError(where, f"expected {name}, got {type(obj).__name__}")
    return obj


def _number(obj, where) -> float:
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise InstanceFormatError(where, f"expected number, got {type(obj).__name__}")
    return float(obj)


def _vector(obj, where) -> np.ndarray:
    _expect(obj, list, where)
    return np.array([_number(v, f"{where}[{i}]") for i, v in enumerate(obj)], dtype=float)


def _matrix(obj, where) -> np.ndarray:
    _expect(obj, list, where)
    rows = [_vector(r, f"{where}[{i}]") for i, r in enumerate(obj)]
    if not rows:
        raise InstanceFormatError(where, "empty matrix")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise InstanceFormatError(f"{where}[{i}]", f"ragged row of length {len(r)} != {width}")
    return np.vstack(rows)


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise InstanceFormatError(where, f"missing key {key!r}")
    return obj[key]


def space_from_dict(obj: Any, where: str = "space") -> FiniteMetricSpace:
    _expect(obj, dict, where)
    labels = _expect(_require(obj, "labels", where), list, f"{where}.labels")
    for i, lab in enumerate(labels):
        _expect(lab, str, f"{where}.labels[{i}]")
    dist = _matrix(_require(obj, "dist", where), f"{where}.dist")
    return FiniteMetricSpace(tuple(labels), dist)


def space_to_dict(space: FiniteMetricSpace) -> dict:
    return {"labels": list(space.labels), "dist": space.dist.tolist()}


def instance_from_dict(obj: Any) -> StochasticInstance:
    _expect(obj, dict, "$")
    X = space_from_dict(_require(obj, "space_X", "$"), "space_X")
    Y = space_from_dict(_require(obj, "space_Y", "$"), "space_Y")
    raw = _expect(_require(obj, "scenarios", "$"), list, "scenarios")
    scenarios = []
    for k, sc in enumerate(raw):
        where = f"scenarios[{k}]"
        _expect(sc, dict, where)
        scenarios.append(
            Scenario(
                weight=_number(_require(sc, "weight", where), f"{where}.weight"),
                cost=_matrix(_require(sc, "cost", where), f"{where}.cost"),
                mu=_vector(_require(sc, "mu", where), f"{where}.mu"),
                nu=_vector(_require(sc, "nu", where), f"{where}.nu"),
            )
        )
    return StochasticInstance(X, Y, tuple(scenarios))


def instance_to_dict(inst: StochasticInstance) -> dict:
    return {
        "space_X": space_to_dict(inst.space_X),
        "space_Y": space_to_dict(inst.space_Y),
        "scenarios": [
            {
                "weight": sc.weight,
                "cost": sc.cost.tolist(),
                "mu": sc.mu.tolist(),
                "nu": sc.nu.tolist(),
            }
            for sc in inst.scenarios
        ],
    }


def plan_from_dict(obj: Any) -> StochasticPlan:
    _expect(obj, dict, "$")
    raw = _expect(_require(obj, "couplings", "$"), list, "couplings")
    return StochasticPlan(tuple(_matrix(c, f"couplings[{k}]") for k, c in enumerate(raw)))


def plan_to_dict(plan: StochasticPlan) -> dict:
    return {"couplings": [c.tolist() for c in plan.couplings]}


def load_json(path) -> Any:
    try:
        with open(path, "rb") as fh:
            return json.loads(fh.read())
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from exc


def load_instance(path) -> StochasticInstance:
    return instance_from_dict(load_json(path))


def load_plan(path) -> StochasticPlan:
    return plan_from_dict(load_json(path))
