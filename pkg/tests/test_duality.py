import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import single
from stochot.core import DualPair, FiniteMetricSpace, StochasticPlan
from stochot.duality import (
    InfeasibleDualError,
    InfeasiblePlanError,
    assemble_stochastic_duals,
    dual_value,
    dual_violation,
    lipschitz_constant,
    lipschitz_smooth_cost,
    smoothing_violations,
    sufficient_level,
    verify_duality_gap,
)
from stochot.fuzz import random_cost, random_feasible_dual, random_feasible_plan, random_instance, random_space, rng_for
from stochot.ot_solver import extract_duals, solve_transport
from stochot.stochastic import product_plan, solve_stochastic, stochastic_cost

TWO = FiniteMetricSpace.discrete(["a", "b"])


def zero_dual(inst):
    return DualPair(
        tuple(np.zeros(len(inst.space_X)) for _ in inst.scenarios),
        tuple(np.zeros(len(inst.space_Y)) for _ in inst.scenarios),
    )


def lp_duals(inst):
    res = solve_stochastic(inst)
    pairs = [extract_duals(sc.cost, sc.mu, sc.nu, pi) for sc, pi in zip(inst.scenarios, res.plan.couplings)]
    return res, DualPair(tuple(u for u, _ in pairs), tuple(v for _, v in pairs))


def smoothing_oracle(cost, dX, dY, n):
    m, k = cost.shape
    out = np.empty_like(cost)
    for x in range(m):
        for y in range(k):
            out[x, y] = min(
                min(cost[a, b], n) + n * (dX[x, a] + dY[y, b]) for a in range(m) for b in range(k)
            )
    return out


# ---------------------------------------------------------------- dual objective


def test_dual_value_examples(i1):
    assert dual_value(i1, zero_dual(i1)) == 0
    _, lp = lp_duals(i1)
    assert dual_value(i1, lp) == pytest.approx(0.8, abs=1e-12)
    colmin = DualPair(tuple(np.zeros(2) for _ in i1.scenarios), tuple(sc.cost.min(axis=0) for sc in i1.scenarios))
    expect = sum(sc.weight * float(sc.nu @ sc.cost.min(axis=0)) for sc in i1.scenarios)
    assert dual_value(i1, colmin) == pytest.approx(expect, abs=1e-15)
    assert dual_value(i1, colmin) <= solve_stochastic(i1).value


def test_gap_examples(i1):
    res, lp = lp_duals(i1)
    rep = verify_duality_gap(i1, res.plan, lp)
    assert rep.optimal and abs(rep.gap) <= 1e-9
    prod = product_plan(i1)
    rep = verify_duality_gap(i1, prod, zero_dual(i1))
    assert rep.gap == stochastic_cost(i1, prod)
    assert rep.gap >= 0 and rep.weak_duality_holds and not rep.optimal


def test_gap_errors(i1):
    res, lp = lp_duals(i1)
    bad_plan = StochasticPlan((res.plan.couplings[0] * 2, res.plan.couplings[1]))
    with pytest.raises(InfeasiblePlanError):
        verify_duality_gap(i1, bad_plan, lp)
    bad_dual = DualPair(lp.psi, (lp.phi[0] + 1, lp.phi[1]))
    with pytest.raises(InfeasibleDualError):
        verify_duality_gap(i1, res.plan, bad_dual)


def test_assembled_duals_on_reference(i1):
    dual = assemble_stochastic_duals(i1)
    assert dual.psi[1].tolist() == [0, -1]
    assert dual.phi[1].tolist() == [0, -1]
    assert dual.psi[0].tolist() == [0, -2]
    assert dual_value(i1, dual) == pytest.approx(0.8, abs=1e-12)
    assert dual_violation(i1, dual) <= 0


def test_assembled_duals_singleton():
    inst = single([[2.25]], [1.0], [1.0])
    dual = assemble_stochastic_duals(inst)
    assert dual.psi[0].tolist() == [0] and dual.phi[0].tolist() == [2.25]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 5), st.integers(1, 5), st.integers(1, 4))
def test_strong_duality(seed, nx, ny, k):
    inst = random_instance(seed, nx, ny, k)
    res = solve_stochastic(inst)
    dual = assemble_stochastic_duals(inst, res)
    rep = verify_duality_gap(inst, res.plan, dual)
    assert abs(rep.gap) <= 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 5), st.integers(1, 5), st.integers(1, 4))
def test_weak_duality(seed, nx, ny, k):
    inst = random_instance(seed, nx, ny, k)
    rng = rng_for(seed + 1)
    for _ in range(100):
        rep = verify_duality_gap(inst, random_feasible_plan(rng, inst), random_feasible_dual(rng, inst))
        assert rep.weak_duality_holds


# ---------------------------------------------------------------- smoothing


def test_smoothing_examples():
    c = np.array([[0.0, 10.0], [10.0, 0.0]])
    assert lipschitz_smooth_cost(c, TWO, TWO, 2).cost_n.tolist() == [[0, 2], [2, 0]]
    assert lipschitz_smooth_cost(c, TWO, TWO, 20).cost_n.tolist() == c.tolist()
    for n in (1, 3, 7):
        assert np.all(lipschitz_smooth_cost(np.zeros((2, 2)), TWO, TWO, n).cost_n == 0)


@pytest.mark.parametrize("n", [0, -1, 1.5, True])
def test_smoothing_rejects_bad_levels(n):
    with pytest.raises(ValueError):
        lipschitz_smooth_cost(np.zeros((2, 2)), TWO, TWO, n)


def test_sufficient_level_example():
    c = np.array([[0.0, 10.0], [10.0, 0.0]])
    assert lipschitz_constant(c, TWO, TWO) == 10
    assert sufficient_level(c, TWO, TWO) == 10
    assert lipschitz_smooth_cost(c, TWO, TWO, 10).cost_n.tolist() == c.tolist()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 4), st.integers(1, 4))
def test_smoothing_properties(seed, m, k):
    rng = rng_for(seed)
    dX, dY = random_space(rng, m, "x"), random_space(rng, k, "y")
    c = random_cost(rng, m, k) * rng.integers(1, 6)
    prev = None
    for n in (1, 2, 4, 8, 16):
        sm = lipschitz_smooth_cost(c, dX, dY, n)
        np.testing.assert_array_equal(sm.cost_n, smoothing_oracle(c, dX.dist, dY.dist, n))
        assert smoothing_violations(c, sm, dX, dY) == []
        if prev is not None:
            assert np.all(prev <= sm.cost_n + 1e-12)
        prev = sm.cost_n
    top = sufficient_level(c, dX, dY)
    assert np.max(np.abs(lipschitz_smooth_cost(c, dX, dY, top).cost_n - c)) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 4), st.integers(1, 4))
def test_smoothed_optimum_increases_to_the_limit(seed, m, k):
    inst = random_instance(seed, m, k, 1)
    sc = inst.scenarios[0]
    vals = []
    top = sufficient_level(sc.cost, inst.space_X, inst.space_Y)
    for n in sorted({1, 2, 3, max(1, top // 2), top}):
        cn = lipschitz_smooth_cost(sc.cost, inst.space_X, inst.space_Y, n).cost_n
        vals.append(solve_transport(cn, sc.mu, sc.nu).value)
    assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))
    assert math.isclose(vals[-1], solve_transport(sc.cost, sc.mu, sc.nu).value, abs_tol=1e-9)
