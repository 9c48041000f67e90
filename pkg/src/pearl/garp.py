"""Revealed-preference relations, GARP checks and Afriat's efficiency index.

Relations are dense boolean matrices indexed by observation.  ``weak[i, j]``
means bundle i is (epsilon-)directly revealed preferred to bundle j,
``strict[i, j]`` the strict version.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import connected_components

from .dataset import Dataset
from .errors import PreconditionError, ValidationError

AFRIAT_TOL = 1e-8


@dataclass(frozen=True)
class RelationMatrix:
    weak: np.ndarray
    strict: np.ndarray
    epsilon: float = 1.0
    closed: bool = False

    @property
    def N(self) -> int:
        return self.weak.shape[0]


@dataclass(frozen=True)
class GarpReport:
    consistent: bool
    epsilon_used: float
    violating_cycle: list[int] | None = None

    def to_dict(self) -> dict:
        return {"consistent": self.consistent,
                "epsilon_used": self.epsilon_used,
                "violating_cycle": self.violating_cycle}


@dataclass(frozen=True)
class AfriatNumbers:
    U: np.ndarray
    lam: np.ndarray = field(metadata={"alias": "lambda"})

    def max_violation(self, d: Dataset) -> float:
        """Largest positive slack of ``U_i - U_j - lam_j p_j.(x_i - x_j)``."""
        return float(np.max(_afriat_lhs(d, self.U, self.lam)))


def _cross_expenditure(d: Dataset) -> np.ndarray:
    """``C[i, j] = p_i . x_j``."""
    return d.p @ d.x.T


def direct_relations(d: Dataset, epsilon: float = 1.0) -> RelationMatrix:
    """Directly revealed (weak, strict) relations at efficiency ``epsilon``."""
    if not 0.0 < epsilon <= 1.0:
        raise ValidationError(f"epsilon must lie in (0, 1], got {epsilon}")
    c = _cross_expenditure(d)
    own = epsilon * np.diag(c)[:, None]
    off = ~np.eye(d.N, dtype=bool)
    return RelationMatrix(weak=(own >= c) & off, strict=(own > c) & off, epsilon=epsilon)


def transitive_closure(r: RelationMatrix) -> RelationMatrix:
    """Warshall closure of the weak relation; the strict relation is kept as is."""
    closed = r.weak.copy()
    for k in range(closed.shape[0]):
        # rows that reach k inherit everything k reaches
        closed |= np.outer(closed[:, k], closed[k, :])
    return RelationMatrix(weak=closed, strict=r.strict.copy(), epsilon=r.epsilon, closed=True)


def garp_violations(r: RelationMatrix) -> np.ndarray:
    """Boolean matrix of pairs (i, j) with i R j (closed) and j P^D i."""
    if not r.closed:
        r = transitive_closure(r)
    return r.weak & r.strict.T


def _shortest_path(adj: np.ndarray, src: int, dst: int, allowed: np.ndarray) -> list[int]:
    prev = {src: src}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        if u == dst:
            break
        for v in np.nonzero(adj[u] & allowed)[0]:
            v = int(v)
            if v not in prev:
                prev[v] = u
                queue.append(v)
    path = [dst]
    while path[-1] != src:
        path.append(prev[path[-1]])
    return path[::-1]


def check_garp(d: Dataset, epsilon: float = 1.0) -> GarpReport:
    """Test GARP(epsilon) and return one violating cycle as a witness.

    A violation (i R j closed, j P^D i) exists exactly when a strict edge
    j -> i joins two observations of the same strongly connected component
    of the weak graph, so the closure itself is never materialised.
    """
    rel = direct_relations(d, epsilon)
    if d.N == 1:
        return GarpReport(True, epsilon, None)
    _, label = connected_components(csr_matrix(rel.weak), directed=True, connection="strong")
    same = label[:, None] == label[None, :]
    bad_j, bad_i = np.nonzero(rel.strict & same)
    if bad_j.size == 0:
        return GarpReport(True, epsilon, None)
    j, i = int(bad_j[0]), int(bad_i[0])
    # strict j -> i closes the cycle i ~> j found inside the component
    path = _shortest_path(rel.weak, i, j, label == label[i])
    start = path.index(min(path))
    return GarpReport(False, epsilon, path[start:] + path[:start])


def afriat_index(d: Dataset, tol: float = 1e-6, max_iter: int = 40) -> float:
    """Largest epsilon in (0, 1] at which GARP(epsilon) holds, by bisection.

    The returned value is the last consistent candidate, so the result is a
    lower bound within ``tol`` of the supremum.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive")
    if check_garp(d, 1.0).consistent:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(max_iter):
        if hi - lo < tol:
            break
        mid = 0.5 * (lo + hi)
        if check_garp(d, mid).consistent:
            lo = mid
        else:
            hi = mid
    if lo == 0.0:
        # relations vanish below min_j p_i.x_j / p_i.x_i
        c = _cross_expenditure(d)
        lo = float(np.min(c / np.diag(c)[:, None])) * 0.5
    return lo


def _afriat_lhs(d: Dataset, U, lam) -> np.ndarray:
    # entry [i, j] = U_i - U_j - lam_j p_j.(x_i - x_j); must be <= 0
    c = _cross_expenditure(d)  # c[j, i] = p_j . x_i
    gap = c.T - np.diag(c)[None, :]  # gap[i, j] = p_j.x_i - p_j.x_j
    return U[:, None] - U[None, :] - lam[None, :] * gap


def afriat_numbers(d: Dataset, abs_tol: float = AFRIAT_TOL) -> AfriatNumbers:
    """Utility levels and multipliers solving Afriat's inequalities.

    Multipliers come from a feasibility LP over ``lam >= 1`` with the levels
    eliminated through shortest paths; the levels are then recovered exactly
    as shortest-path distances in the graph with edge weights
    ``lam_j p_j.(x_i - x_j)``, which satisfies every inequality by
    construction.
    """
    if not check_garp(d, 1.0).consistent:
        raise PreconditionError(
            "dataset violates GARP; adjust it with afriat_index() before computing Afriat numbers")
    n = d.N
    c = _cross_expenditure(d)
    gap = c.T - np.diag(c)[None, :]  # gap[i, j] = p_j.(x_i - x_j)
    if n == 1:
        return AfriatNumbers(U=np.ones(1), lam=np.ones(1))

    # variables: U (n), lam (n); U_i - U_j - lam_j gap[i, j] <= 0 for i != j
    ii, jj = np.nonzero(~np.eye(n, dtype=bool))
    m = ii.size
    coef = np.column_stack([np.ones(m), -np.ones(m), -gap[ii, jj]])
    # scale rows so the LP tolerance is relative to expenditure magnitudes
    coef /= np.maximum(1.0, np.abs(coef).max(axis=1))[:, None]
    rows = np.repeat(np.arange(m), 3)
    cols = np.column_stack([ii, jj, n + jj]).ravel()
    a = coo_matrix((coef.ravel(), (rows, cols)), shape=(m, 2 * n)).tocsr()
    # small margin so floating error cannot tip a tight constraint
    b = -1e-9 * np.ones(m)
    cost = np.concatenate([np.zeros(n), np.ones(n)])
    bounds = [(None, None)] * n + [(1.0, None)] * n
    res = linprog(cost, A_ub=a, b_ub=b, bounds=bounds, method="highs")
    if res.status != 0:
        res = linprog(cost, A_ub=a, b_ub=np.zeros(m), bounds=bounds, method="highs")
    if res.status != 0:
        raise PreconditionError(f"Afriat inequalities infeasible: {res.message}")
    lam = np.maximum(res.x[n:], 1.0)

    # U_i = min over paths of sum of edge weights w(j -> i) = lam_j gap[i, j]
    w = lam[None, :] * gap  # w[i, j]: bound on U_i from U_j
    dist = np.zeros(n)
    for _ in range(n):
        cand = np.min(dist[None, :] + w + np.where(np.eye(n, dtype=bool), np.inf, 0.0), axis=1)
        new = np.minimum(dist, cand)
        if np.array_equal(new, dist):
            break
        dist = new
    U = dist - dist.min() + 1.0
    nums = AfriatNumbers(U=U, lam=lam)
    if nums.max_violation(d) > abs_tol:
        raise PreconditionError(
            f"Afriat construction violates tolerance by {nums.max_violation(d):.3g}")
    return nums
