import dataclasses
import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import single
from stochot.core import StochasticPlan, plan_cost
from stochot.fuzz import random_instance, random_vertex_coupling, rng_for
from stochot.geometry import (
    Cycle,
    DegenerateCycleError,
    InfeasiblePotentialsError,
    NonMonotoneSupportError,
    c_double_transform,
    c_subdifferential,
    c_transform,
    certify_support,
    check_cyclical_monotonicity,
    check_plan_concentration,
    concentration_sets,
    cycle_defect,
    default_max_cycle_len,
    improve_along_cycle,
    rockafellar_potential,
    support_of,
    verify_equivalence,
)
from stochot.ot_solver import solve_transport
from stochot.stochastic import product_plan, solve_stochastic

SWAP = np.array([[0.0, 1.0], [1.0, 0.0]])
C1 = np.array([[1.0, 2.0], [3.0, 1.0]])


# ---------------------------------------------------------------- oracles


def has_violation(cost, support, max_len):
    """Any ordered tuple of distinct support pairs with negative defect (x, y may repeat)."""
    for r in range(2, min(max_len, len(support)) + 1):
        for combo in itertools.permutations(support, r):
            if cycle_defect(cost, combo) < -1e-9:
                return True
    return False


def chain_sup(cost, support, anchor, x):
    """Largest chain value from ``anchor`` landing on ``x``, over chains of distinct pairs."""
    c = np.asarray(cost, dtype=float)
    others = [p for p in support if p != anchor]
    best = c[anchor] - c[x, anchor[1]]
    for r in range(1, len(others) + 1):
        for chain in itertools.permutations(others, r):
            val = c[anchor] - c[chain[0][0], anchor[1]]
            for a, b in zip(chain, chain[1:]):
                val += c[a] - c[b[0], a[1]]
            val += c[chain[-1]] - c[x, chain[-1][1]]
            best = max(best, val)
    return best


# ---------------------------------------------------------------- support and cycles


def test_support_examples():
    assert support_of([[0.5, 0], [0, 0.5]]) == [(0, 0), (1, 1)]
    assert support_of([[0.3, 0], [0.3, 0.4]]) == [(0, 0), (1, 0), (1, 1)]
    assert support_of(np.zeros((2, 3))) == []
    assert support_of([[1e-13, 0.5]]) == [(0, 1)]


def test_cycle_examples():
    assert check_cyclical_monotonicity(C1, [(0, 0), (1, 0), (1, 1)], 2) is None
    cyc = check_cyclical_monotonicity(SWAP, [(0, 1), (1, 0)], 2)
    assert cyc is not None
    assert cyc.defect == -2
    assert set(cyc.pairs) == {(0, 1), (1, 0)}
    assert check_cyclical_monotonicity(SWAP, [], 2) is None
    assert check_cyclical_monotonicity(SWAP, [(0, 1)], 2) is None


def test_max_len_must_allow_a_cycle():
    with pytest.raises(ValueError):
        check_cyclical_monotonicity(SWAP, [(0, 1)], 1)


def test_max_len_bounds_search():
    # a 3-cycle violation with every 2-cycle fine
    c = np.array([[0, 1, 5], [5, 0, 1], [1, 5, 0]], dtype=float)
    supp = [(0, 1), (1, 2), (2, 0)]
    assert check_cyclical_monotonicity(c, supp, 2) is None
    cyc = check_cyclical_monotonicity(c, supp, 3)
    assert cyc.defect == pytest.approx(-3)
    assert cycle_defect(c, cyc.pairs) == cyc.defect


def test_env_override(monkeypatch):
    monkeypatch.setenv("KT_MAX_CYCLE_LEN", "3")
    assert default_max_cycle_len() == 3
    monkeypatch.delenv("KT_MAX_CYCLE_LEN")
    assert default_max_cycle_len() == 8


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 4), st.integers(2, 4), st.integers(2, 5))
def test_cycle_search_matches_permutation_oracle(seed, m, n, size):
    rng = rng_for(seed)
    c = rng.integers(0, 6, size=(m, n)).astype(float)
    cells = [(i, j) for i in range(m) for j in range(n)]
    idx = rng.choice(len(cells), size=min(size, len(cells)), replace=False)
    supp = sorted(cells[k] for k in idx)
    found = check_cyclical_monotonicity(c, supp, len(supp))
    assert (found is not None) == has_violation(c, supp, len(supp))
    if found is not None:
        assert cycle_defect(c, found.pairs) == pytest.approx(found.defect)


# ---------------------------------------------------------------- improvement


def test_improve_swap_example():
    pi = np.array([[0, 0.5], [0.5, 0]])
    cyc = check_cyclical_monotonicity(SWAP, support_of(pi), 2)
    out = improve_along_cycle(pi, cyc)
    assert out.tolist() == [[0.5, 0], [0, 0.5]]
    assert plan_cost(SWAP, pi) == 1 and plan_cost(SWAP, out) == 0


def test_theta_is_smallest_cycle_entry():
    pi = np.array([[0.1, 0.4], [0.4, 0.1]])
    cyc = Cycle(((0, 0), (1, 1)), cycle_defect(1 - SWAP, ((0, 0), (1, 1))))
    out = improve_along_cycle(pi, cyc)
    np.testing.assert_allclose(out, [[0.0, 0.5], [0.5, 0.0]], atol=1e-15)

    pi = np.array([[0.1, 0.4], [0.5, 0.0]])
    cyc = check_cyclical_monotonicity(SWAP, support_of(pi), 2)
    assert set(cyc.pairs) == {(0, 1), (1, 0)}
    out = improve_along_cycle(pi, cyc)
    np.testing.assert_allclose(out, [[0.5, 0.0], [0.1, 0.4]], atol=1e-15)


def test_improve_rejects_bad_cycles():
    opt = solve_transport(C1, [0.3, 0.7], [0.6, 0.4]).coupling
    assert check_cyclical_monotonicity(C1, support_of(opt), 8) is None
    with pytest.raises(ValueError):
        improve_along_cycle(opt, Cycle(((0, 0), (1, 1)), 1.0))
    with pytest.raises(ValueError):
        improve_along_cycle(opt, Cycle(((0, 1), (1, 0)), -3.0))
    with pytest.raises(DegenerateCycleError):
        improve_along_cycle([[1e-13, 0.5], [0.5, 1e-13]], Cycle(((0, 0), (1, 1)), -2.0))


def test_improve_is_exact_with_fractions():
    rng = rng_for(4)
    for _ in range(50):
        m, n = rng.integers(2, 5, size=2)
        c = rng.integers(0, 9, size=(m, n)).astype(float)
        pi = np.empty((m, n), dtype=object)
        for i in range(m):
            for j in range(n):
                pi[i, j] = Fraction(int(rng.integers(1, 20)), 97)
        rows, cols = pi.sum(axis=1), pi.sum(axis=0)
        cyc = check_cyclical_monotonicity(c, support_of(pi.astype(float)), 4)
        if cyc is None:
            continue
        out = improve_along_cycle(pi, cyc)
        assert all(out.sum(axis=1) == rows) and all(out.sum(axis=0) == cols)
        assert min(out.ravel()) >= 0
        theta = min(pi[p] for p in cyc.pairs)
        drop = sum(c[i, j] * (pi[i, j] - out[i, j]) for i in range(m) for j in range(n))
        assert float(drop) == pytest.approx(float(theta) * -cyc.defect)


# ---------------------------------------------------------------- potentials


def test_rockafellar_examples():
    assert rockafellar_potential(SWAP, [(0, 0), (1, 1)], (0, 0)).tolist() == [0, -1]
    c = np.array([[2.0, 5.0], [4.0, 1.0], [0.5, 3.0]])
    psi = rockafellar_potential(c, [(0, 0)])
    assert psi.tolist() == [0.0, 2.0 - 4.0, 2.0 - 0.5]
    psi = rockafellar_potential(C1, [(0, 0), (1, 0), (1, 1)], (0, 0))
    assert psi[0] == 0
    assert psi[1] == chain_sup(C1, [(0, 0), (1, 0), (1, 1)], (0, 0), 1) == -2


def test_rockafellar_rejects_non_monotone_support():
    with pytest.raises(NonMonotoneSupportError) as exc:
        rockafellar_potential(SWAP, [(0, 1), (1, 0)])
    assert exc.value.cycle.defect < 0


def test_rockafellar_anchor_must_be_in_support():
    with pytest.raises(ValueError):
        rockafellar_potential(SWAP, [(0, 0)], (1, 1))


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 3), st.integers(1, 3))
def test_rockafellar_matches_chain_enumeration(seed, m, n):
    rng = rng_for(seed)
    c = np.round(rng.random((m, n)), 3)
    mu = np.full(m, 1 / m)
    nu = np.full(n, 1 / n)
    supp = support_of(solve_transport(c, mu, nu).coupling)
    for anchor in supp:
        psi = rockafellar_potential(c, supp, anchor)
        assert psi[anchor[0]] == 0
        for x in range(m):
            assert psi[x] == pytest.approx(chain_sup(c, supp, anchor, x), abs=1e-12)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 5), st.integers(1, 5))
def test_potentials_certify_optimal_support(seed, m, n):
    inst = random_instance(seed, m, n, 1)
    sc = inst.scenarios[0]
    supp = support_of(solve_transport(sc.cost, sc.mu, sc.nu).coupling)
    psi = rockafellar_potential(sc.cost, supp)
    phi = c_transform(sc.cost, psi)
    slack = phi[None, :] - psi[:, None] - sc.cost
    assert slack.max() <= 1e-9
    assert all(abs(slack[p]) <= 1e-9 for p in supp)
    # c-convexity through the double transform
    np.testing.assert_allclose(c_double_transform(sc.cost, phi), psi, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 4))
def test_non_monotone_support_is_reported(seed, k):
    rng = rng_for(seed)
    c = rng.integers(0, 9, size=(k, k)).astype(float)
    supp = [(i, int(j)) for i, j in enumerate(rng.permutation(k))]
    supp += [(int(i), int(j)) for i, j in rng.integers(0, k, size=(2, 2))]
    if has_violation(c, sorted(set(supp)), len(set(supp))):
        with pytest.raises(NonMonotoneSupportError) as exc:
            rockafellar_potential(c, supp)
        assert cycle_defect(c, exc.value.cycle.pairs) < 0
    else:
        rockafellar_potential(c, supp)


def test_c_transform_examples():
    assert c_transform(SWAP, [0, -1]).tolist() == [0, -1]
    np.testing.assert_array_equal(c_transform(C1, [0, 0]), C1.min(axis=0))
    assert c_transform([[3.0, 1.0, 2.0]], [0.5]).tolist() == [3.5, 1.5, 2.5]
    with pytest.raises(ValueError):
        c_transform(SWAP, [0, np.inf])


def test_subdifferential_examples():
    gamma = c_subdifferential(SWAP, [0, -1], [0, -1])
    assert {(0, 0), (1, 1)} <= set(gamma)
    assert (1, 0) in gamma and (0, 1) not in gamma
    c = np.array([[4.0, 1.0], [2.0, 3.0], [2.0, 1.0]])
    gamma = c_subdifferential(c, np.zeros(3), c.min(axis=0))
    assert gamma == [(0, 1), (1, 0), (2, 0), (2, 1)]
    with pytest.raises(InfeasiblePotentialsError):
        c_subdifferential(SWAP, [0, 0], [0.5, 0])


def test_subdifferential_exact_with_zero_tol():
    c = np.array([[0.5, 0.25], [0.75, 0.125]])
    psi = np.array([0.0, -0.25])
    phi = c_transform(c, psi)
    # phi = (0.5, -0.125), all dyadic so equality is exact
    assert c_subdifferential(c, psi, phi, tol=0.0) == [(0, 0), (1, 0), (1, 1)]


# ---------------------------------------------------------------- equivalence report


def test_verify_on_reference_optimum(i1):
    rep = verify_equivalence(i1, solve_stochastic(i1).plan)
    assert rep.optimal and rep.monotone and rep.certified
    assert rep.consistent and rep.defects == []


def test_verify_on_anti_diagonal(i1):
    opt = solve_stochastic(i1).plan
    plan = StochasticPlan((opt.couplings[0], np.array([[0, 0.5], [0.5, 0]])))
    rep = verify_equivalence(i1, plan)
    assert not rep.optimal and not rep.monotone and not rep.certified
    assert rep.consistent
    bad = rep.scenarios[1]
    assert bad.witness.defect == -2
    assert rep.scenarios[0].optimal


def test_verify_zero_cost_any_plan(i1):
    zero = i1.with_scenarios([dataclasses.replace(s, cost=np.zeros((2, 2))) for s in i1.scenarios])
    rep = verify_equivalence(zero, product_plan(zero))
    assert rep.optimal and rep.monotone and rep.certified


def test_concentration_examples(i1):
    opt = solve_stochastic(i1).plan
    gamma = concentration_sets(i1, opt)
    assert check_plan_concentration(i1, gamma, opt)

    inst = single(np.ones((2, 2)), [0.5, 0.5], [0.5, 0.5])
    a = StochasticPlan((np.eye(2) / 2,))
    b = StochasticPlan((np.fliplr(np.eye(2)) / 2,))
    gamma = concentration_sets(inst, a)
    assert sorted(gamma[0]) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert check_plan_concentration(inst, gamma, b)


def test_concentration_detects_mass_off_gamma(i1):
    gamma = concentration_sets(i1, solve_stochastic(i1).plan)
    assert not check_plan_concentration(i1, gamma, product_plan(i1))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 5), st.integers(2, 5))
def test_suboptimal_vertices_improve(seed, m, n):
    inst = random_instance(seed, m, n, 1)
    sc = inst.scenarios[0]
    opt = solve_transport(sc.cost, sc.mu, sc.nu).value
    rng = rng_for(seed)
    for _ in range(10):
        pi = random_vertex_coupling(rng, sc.mu, sc.nu)
        cost = plan_cost(sc.cost, pi)
        supp = support_of(pi)
        cyc = check_cyclical_monotonicity(sc.cost, supp, len(supp))
        if cost - opt > 1e-6:
            assert cyc is not None
            better = improve_along_cycle(pi, cyc)
            assert plan_cost(sc.cost, better) < cost
        ok = certify_support(sc.cost, supp, sc.nu)[2]
        assert (cyc is None) == ok
