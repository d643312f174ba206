"""Exact discrete optimal transport.

``solve_transport`` runs the network simplex method on the bipartite
transportation graph: a northwest-corner initial basis, Bland's rule for the
entering arc (lowest row-major index with negative reduced cost) and the
lowest row-major index among tied leaving arcs. Degenerate pivots are allowed;
Bland's rule is what guarantees termination.

Potentials follow the convention ``v[y] - u[x] <= c[x, y]`` with equality on
basic arcs, so the dual objective is ``nu @ v - mu @ u``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import DimensionError, FEAS_TOL, StochotError, SUPPORT_TOL, plan_cost

MAX_ENUM_CELLS = 36


class SolverError(StochotError):
    pass


class InstanceTooLargeError(StochotError, ValueError):
    pass


class NotOptimalError(StochotError, ValueError):
    """A coupling handed to ``extract_duals`` admits no feasible slack-tight duals."""


@dataclass(frozen=True)
class SolveResult:
    coupling: np.ndarray
    value: float
    u: np.ndarray
    v: np.ndarray

    @property
    def duals(self) -> tuple[np.ndarray, np.ndarray]:
        return self.u, self.v


def dual_objective(u, v, mu, nu) -> float:
    return math.fsum(np.asarray(nu) * np.asarray(v)) - math.fsum(np.asarray(mu) * np.asarray(u))


def _check_inputs(cost, mu, nu):
    cost = np.asarray(cost, dtype=float)
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if cost.ndim != 2 or mu.ndim != 1 or nu.ndim != 1:
        raise DimensionError("cost must be a matrix and marginals vectors")
    if cost.shape != (mu.size, nu.size):
        raise DimensionError(f"cost shape {cost.shape} != ({mu.size}, {nu.size})")
    if mu.size == 0 or nu.size == 0:
        raise DimensionError("empty marginal")
    if not np.all(np.isfinite(cost)):
        raise ValueError("non-finite cost entry")
    return cost, mu, nu


def anchor_row(mu: np.ndarray) -> int:
    """First point carrying positive mass; duals are pinned to zero there."""
    pos = np.flatnonzero(mu > 0)
    return int(pos[0]) if pos.size else 0


def northwest_corner(mu, nu, row_order=None, col_order=None):
    """Staircase basis of ``m + n - 1`` cells and its flow.

    Optional orders permute rows and columns before the sweep, which reaches
    other vertices of the transportation polytope.
    """
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    m, n = mu.size, nu.size
    rows = list(range(m)) if row_order is None else list(row_order)
    cols = list(range(n)) if col_order is None else list(col_order)
    supply = mu.copy()
    demand = nu.copy()
    flow = np.zeros((m, n))
    basis = []
    a = b = 0
    while True:
        i, j = rows[a], cols[b]
        q = min(supply[i], demand[j])
        flow[i, j] = q
        basis.append((i, j))
        supply[i] -= q
        demand[j] -= q
        if a == m - 1 and b == n - 1:
            break
        if a == m - 1:
            b += 1
        elif b == n - 1:
            a += 1
        elif supply[i] <= demand[j]:
            a += 1
        else:
            b += 1
    return flow, basis


def _adjacency(basis, m, n):
    # rows are nodes 0..m-1, columns m..m+n-1
    adj = [[] for _ in range(m + n)]
    for i, j in basis:
        adj[i].append(m + j)
        adj[m + j].append(i)
    return adj


def _tree_potentials(cost, basis, m, n, root):
    u = np.full(m, np.nan)
    v = np.full(n, np.nan)
    adj = _adjacency(basis, m, n)
    u[root] = 0.0
    queue = deque([root])
    seen = {root}
    while queue:
        node = queue.popleft()
        for nb in adj[node]:
            if nb in seen:
                continue
            seen.add(nb)
            if node < m:
                v[nb - m] = u[node] + cost[node, nb - m]
            else:
                u[nb] = v[node - m] - cost[nb, node - m]
            queue.append(nb)
    if len(seen) != m + n:
        raise SolverError("basis is not a spanning tree")
    return u, v


def _tree_path(adj, start, goal):
    """Node path from ``start`` to ``goal`` in a tree."""
    parent = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for nb in adj[node]:
            if nb not in parent:
                parent[nb] = node
                queue.append(nb)
    path = [goal]
    while path[-1] != start:
        path.append(parent[path[-1]])
    return path[::-1]


def solve_transport(cost, mu, nu, max_iter: int = 100_000) -> SolveResult:
    """Exact minimiser of ``sum c * pi`` over couplings of ``mu`` and ``nu``."""
    cost, mu, nu = _check_inputs(cost, mu, nu)
    if np.any(cost < 0):
        raise ValueError("negative cost entry")
    m, n = cost.shape
    root = anchor_row(mu)
    flow, basis = northwest_corner(mu, nu)
    in_basis = np.zeros((m, n), dtype=bool)
    for i, j in basis:
        in_basis[i, j] = True
    tol = 1e-12 * max(1.0, float(np.abs(cost).max()))

    for _ in range(max_iter):
        u, v = _tree_potentials(cost, basis, m, n, root)
        reduced = cost - v[None, :] + u[:, None]
        candidates = np.flatnonzero(((reduced < -tol) & ~in_basis).ravel())
        if candidates.size == 0:
            break
        ei, ej = divmod(int(candidates[0]), n)

        # entering arc (ei, ej) closes the cycle col ej -> ... -> row ei in the tree
        adj = _adjacency(basis, m, n)
        nodes = _tree_path(adj, m + ej, ei)
        cells = []
        for a, b in zip(nodes, nodes[1:]):
            cells.append((b, a - m) if a >= m else (a, b - m))
        minus = cells[0::2]
        plus = cells[1::2]
        theta = min(flow[c] for c in minus)
        leaving = min(c for c in minus if flow[c] == theta)

        flow[ei, ej] += theta
        for c in minus:
            flow[c] -= theta
        for c in plus:
            flow[c] += theta
        flow[leaving] = 0.0
        basis.remove(leaving)
        in_basis[leaving] = False
        basis.append((ei, ej))
        in_basis[ei, ej] = True
    else:
        raise SolverError(f"network simplex did not terminate in {max_iter} pivots")

    return SolveResult(flow, plan_cost(cost, flow), u, v)


def brute_force_value(cost, mu, nu) -> float:
    """Optimal value by exhaustive enumeration of forest-supported plans.

    Every vertex of the transportation polytope has an acyclic support. A tree
    on a set of rows and columns is enumerated by rooting it and splitting off
    the child subtree that contains the lowest-numbered remaining line; the
    flow on the edge into a subtree is forced by the subtree's mass imbalance
    and must be nonnegative. The minimum over all such forests, memoised on
    ``(line subset, root)``, is the optimal transport cost.
    """
    cost, mu, nu = _check_inputs(cost, mu, nu)
    m, n = cost.shape
    if m * n > MAX_ENUM_CELLS:
        raise InstanceTooLargeError(f"{m}x{n} instance exceeds {MAX_ENUM_CELLS} cells")
    # a single row or column admits exactly one plan
    if m == 1:
        return plan_cost(cost, nu[None, :])
    if n == 1:
        return plan_cost(cost, mu[:, None])
    N = m + n
    # lines 0..m-1 are rows (signed mass +mu), m..N-1 columns (signed mass -nu)
    signed = mu.tolist() + [-x for x in nu.tolist()]
    c = cost.tolist()
    is_row = [k < m for k in range(N)]

    # balanced components may differ from zero by the marginals' own rounding
    tol = 1e-11 + abs(math.fsum(signed))

    def edge_cost(a, b):
        return c[a][b - m] if a < m else c[b][a - m]

    @lru_cache(maxsize=None)
    def imbalance(S: int) -> float:
        low = S & -S
        return signed[low.bit_length() - 1] + (imbalance(S ^ low) if S ^ low else 0.0)

    @lru_cache(maxsize=None)
    def tree(S: int, r: int) -> float:
        """Cheapest tree on ``S`` rooted at ``r``; the edge above ``r`` is not counted."""
        rest = S & ~(1 << r)
        if not rest:
            return 0.0
        f = rest & -rest
        others = rest ^ f
        out = math.inf
        sub = others
        while True:
            S1 = sub | f
            # mass carried from r into the subtree S1 (negative means upward)
            down = -imbalance(S1) if is_row[r] else imbalance(S1)
            if down >= -tol:
                remain = tree(S ^ S1, r) if S ^ S1 != 1 << r else 0.0
                if remain < out:
                    bits = S1
                    while bits:
                        low = bits & -bits
                        r1 = low.bit_length() - 1
                        bits ^= low
                        if is_row[r1] == is_row[r]:
                            continue
                        val = tree(S1, r1) + max(down, 0.0) * edge_cost(r, r1) + remain
                        if val < out:
                            out = val
            if sub == 0:
                break
            sub = (sub - 1) & others
        return out

    @lru_cache(maxsize=None)
    def forest(S: int) -> float:
        if not S:
            return 0.0
        f = S & -S
        others = S ^ f
        out = math.inf
        sub = others
        while True:
            S1 = sub | f
            if abs(imbalance(S1)) <= tol:
                val = tree(S1, f.bit_length() - 1) + forest(S ^ S1)
                if val < out:
                    out = val
            if sub == 0:
                break
            sub = (sub - 1) & others
        return out

    value = forest((1 << N) - 1)
    if not math.isfinite(value):
        raise ValueError("marginals have different total mass")
    return value


def _support_tree(support, m, n):
    """True when the support cells form a spanning tree of all ``m + n`` nodes."""
    if len(support) != m + n - 1:
        return False
    adj = _adjacency(support, m, n)
    seen = {0}
    stack = [0]
    while stack:
        node = stack.pop()
        for nb in adj[node]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == m + n


def extract_duals(cost, mu, nu, coupling) -> tuple[np.ndarray, np.ndarray]:
    """Potentials ``(u, v)`` tight on the support of an optimal ``coupling``.

    Normalised by ``u[first point with positive mass] = 0``. When the support is
    not a spanning tree (degenerate or non-vertex input) the slackness equations
    do not pin the potentials down, so the problem is re-solved and the duals of
    the solver's optimal basis are used; any optimal dual is slack-tight against
    every optimal primal.
    """
    cost, mu, nu = _check_inputs(cost, mu, nu)
    pi = np.asarray(coupling, dtype=float)
    if pi.shape != cost.shape:
        raise DimensionError(f"coupling shape {pi.shape} != cost shape {cost.shape}")
    m, n = cost.shape
    support = [tuple(int(t) for t in ij) for ij in np.argwhere(pi > SUPPORT_TOL)]
    if _support_tree(support, m, n):
        u, v = _tree_potentials(cost, support, m, n, anchor_row(mu))
    else:
        res = solve_transport(cost, mu, nu)
        u, v = res.u, res.v
    slack = cost - v[None, :] + u[:, None]
    if slack.min() < -FEAS_TOL:
        raise NotOptimalError(
            "coupling is not optimal: tight potentials on its support violate v - u <= c"
        )
    if support and max(abs(slack[ij]) for ij in support) > FEAS_TOL:
        raise NotOptimalError("coupling is not optimal: complementary slackness fails")
    return u, v
