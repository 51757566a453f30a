"""Ground-truth distances on small instances via dynamic programming.

The Bellman operator W(x,y) = c(x,y) + gamma * OT_W(P_X(.|x), P_Y(.|y)) is
iterated to its fixed point, with every inner transportation problem
solved exactly by a vertex-following method (transportation simplex with
Bland anti-cycling).  Exists to validate the sample-based solver; needs
known kernels by design.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chains import CostMatrix, MarkovChain
from .coupling import OccupancyCoupling, joint_initial
from .rounding import TransitionCoupling, induced_occupancy

_PIVOT_TOL = 1e-12
_MAX_PIVOTS = 100_000


def solve_inner_ot(p: np.ndarray, q: np.ndarray, cost: np.ndarray) -> tuple[float, np.ndarray]:
    """Exact optimal transport between two discrete distributions.

    Starts from the northwest-corner basic solution and follows improving
    vertices of the transportation polytope, breaking ties by lowest index
    (Bland's rule) so degenerate pivots cannot cycle.  Returns the optimal
    value and an optimal plan whose marginals match p and q to machine
    precision.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    c = np.asarray(cost, dtype=np.float64)
    m, n = c.shape
    if p.shape != (m,) or q.shape != (n,):
        raise ValueError("marginal sizes must match the cost matrix")
    if m == 1:
        plan = q[None, :].copy()
        return float((plan * c).sum()), plan
    if n == 1:
        plan = p[:, None].copy()
        return float((plan * c).sum()), plan

    X, basis = _northwest_corner(p, q)
    tol = _PIVOT_TOL * max(1.0, float(np.abs(c).max()))
    for _ in range(_MAX_PIVOTS):
        u, v = _tree_duals(basis, c, m, n)
        entering = _bland_entering(basis, c, u, v, tol)
        if entering is None:
            break
        cycle = _basis_cycle(basis, entering, m, n)
        minus = cycle[1::2]
        theta = min(X[cell] for cell in minus)
        leaving = min(cell for cell in minus if X[cell] == theta)
        for idx, cell in enumerate(cycle):
            X[cell] += theta if idx % 2 == 0 else -theta
        X[leaving] = 0.0
        basis.remove(leaving)
        basis.add(entering)
    else:
        raise RuntimeError("transportation solve did not terminate")
    np.maximum(X, 0.0, out=X)
    return float((X * c).sum()), X


def _northwest_corner(p: np.ndarray, q: np.ndarray) -> tuple[np.ndarray, set]:
    m, n = len(p), len(q)
    X = np.zeros((m, n))
    basis = set()
    a = p.copy()
    b = q.copy()
    i = j = 0
    while True:
        t = min(a[i], b[j])
        X[i, j] = t
        basis.add((i, j))
        a[i] -= t
        b[j] -= t
        if i == m - 1 and j == n - 1:
            break
        if a[i] <= b[j] and i < m - 1:
            i += 1
        elif j < n - 1:
            j += 1
        else:
            i += 1
    return X, basis


def _adjacency(basis: set, m: int, n: int) -> list:
    # Bipartite nodes: rows 0..m-1, columns m..m+n-1.
    adj = [[] for _ in range(m + n)]
    for (i, j) in basis:
        adj[i].append(m + j)
        adj[m + j].append(i)
    return adj


def _tree_duals(basis: set, c: np.ndarray, m: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    adj = _adjacency(basis, m, n)
    u = np.zeros(m)
    v = np.zeros(n)
    seen = [False] * (m + n)
    stack = [0]
    seen[0] = True
    while stack:
        node = stack.pop()
        for nb in adj[node]:
            if seen[nb]:
                continue
            seen[nb] = True
            if node < m:
                v[nb - m] = c[node, nb - m] - u[node]
            else:
                u[nb] = c[nb, node - m] - v[node - m]
            stack.append(nb)
    return u, v


def _bland_entering(basis: set, c: np.ndarray, u: np.ndarray, v: np.ndarray, tol: float):
    reduced = c - u[:, None] - v[None, :]
    m, n = c.shape
    flat = reduced.ravel()
    for idx in np.flatnonzero(flat < -tol):
        cell = (idx // n, idx % n)
        if cell not in basis:
            return cell
    return None


def _basis_cycle(basis: set, entering: tuple, m: int, n: int) -> list:
    """Cells of the unique cycle closed by the entering cell, entering first."""
    i_star, j_star = entering
    adj = _adjacency(basis, m, n)
    target = m + j_star
    parent = {i_star: None}
    stack = [i_star]
    while stack:
        node = stack.pop()
        if node == target:
            break
        for nb in adj[node]:
            if nb not in parent:
                parent[nb] = node
                stack.append(nb)
    path = [target]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    # path runs col j* -> ... -> row i*; consecutive nodes are basic cells.
    cells = [entering]
    for a, b in zip(path[:-1], path[1:]):
        cells.append((b, a - m) if a >= m else (a, b - m))
    return cells


@dataclass(frozen=True)
class OracleResult:
    distance: float
    value_table: np.ndarray
    optimal_coupling: TransitionCoupling


def bicausal_value_iteration(chain_x: MarkovChain, chain_y: MarkovChain, cost: CostMatrix,
                             gamma: float, tol: float = 1e-8) -> OracleResult:
    """Exact bicausal transport distance by Bellman fixed-point iteration.

    Iterates W <- c + gamma * OT_W(P_X(.|x), P_Y(.|y)) from W = 0 until the
    sup-norm step falls below tol*(1-gamma)/(2*gamma), which caps the error
    of the reported distance at tol.  The distance is normalized as
    (1-gamma) * W(x0, y0), matching the occupancy-coupling objective.
    Also returns the greedy transition coupling of the final table.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    nx, ny = chain_x.num_states, chain_y.num_states
    if cost.shape != (nx, ny):
        raise ValueError("cost shape must match the chain state counts")
    c = cost.values
    Px, Py = chain_x.transition, chain_y.transition
    threshold = tol * (1.0 - gamma) / (2.0 * gamma)
    W = np.zeros((nx, ny))
    for _ in range(_MAX_PIVOTS):
        ot_vals = np.empty((nx, ny))
        for x in range(nx):
            for y in range(ny):
                ot_vals[x, y], _ = solve_inner_ot(Px[x], Py[y], W)
        W_next = c + gamma * ot_vals
        step = float(np.abs(W_next - W).max())
        W = W_next
        if step <= threshold:
            break
    else:
        raise RuntimeError("value iteration did not converge")
    plans = np.empty((nx, ny, nx, ny))
    for x in range(nx):
        for y in range(ny):
            _, plans[x, y] = solve_inner_ot(Px[x], Py[y], W)
    distance = (1.0 - gamma) * float(W[chain_x.initial_state, chain_y.initial_state])
    return OracleResult(distance=distance, value_table=W, optimal_coupling=TransitionCoupling(plans))


def oracle_occupancy(chain_x: MarkovChain, chain_y: MarkovChain, cost: CostMatrix,
                     gamma: float, tol: float = 1e-8) -> OccupancyCoupling:
    """Optimal occupancy coupling: the greedy coupling's induced occupancy."""
    result = bicausal_value_iteration(chain_x, chain_y, cost, gamma, tol)
    nu0 = joint_initial(chain_x, chain_y)
    return induced_occupancy(result.optimal_coupling, nu0, gamma)
