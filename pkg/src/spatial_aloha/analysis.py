"""Numerical core of the generalized Aloha game.

MAP and rate vectors are 0-based numpy arrays of length ``g.n``; user
indices passed as scalars (``rim(g, q, i)``) are 1-based.
"""
from __future__ import annotations

import graphlib
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect

from .partition import TreePartition
from .topology import InterferenceGraph

DIVERGENCE_EPS = 1e-12
PD_PIVOT_TOL = 1e-12
RIM_SETPOINT = 2.0

CONVERGED = "converged"
DIVERGED = "diverged-to-one"
MAX_ITER = "max-iterations"


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class SolveReport:
    outcome: str
    q: np.ndarray
    iterations: int

    @property
    def converged(self) -> bool:
        return self.outcome == CONVERGED


def _vec(g: InterferenceGraph, x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (g.n,):
        raise ValueError(f"{name} has length {x.size}, expected {g.n}")
    return x


def _silence_product(g: InterferenceGraph, q: np.ndarray) -> np.ndarray:
    """prod_{j: a_ij = 1} (1 - q_j) for every i; exact zero if a neighbor has q_j = 1."""
    saturated = g.csr @ (q >= 1.0).astype(float)
    logs = np.log1p(-np.where(q >= 1.0, 0.0, q))
    prod = np.exp(g.csr @ logs)
    return np.where(saturated > 0, 0.0, prod)


def throughput(g: InterferenceGraph, q) -> np.ndarray:
    q = _vec(g, q, "q")
    return q * _silence_product(g, q)


def best_response_step(g: InterferenceGraph, q, y) -> np.ndarray:
    q = _vec(g, q, "q")
    y = _vec(g, y, "y")
    prod = _silence_product(g, q)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(prod > 0, y / prod, np.where(y > 0, 1.0, 0.0))
    return np.minimum(ratio, 1.0)


def solve_nash(g: InterferenceGraph, y, tol: float = 1e-10,
               max_iter: int = 100_000) -> SolveReport:
    """Least fixed point of the best response, iterated from q = 0.

    The returned ``q`` is the last iterate whose best response moved by at
    most ``tol``, so ``max|q - BR(q)| <= tol`` whenever the outcome is
    converged.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    y = _vec(g, y, "y")
    q = np.zeros(g.n)
    for it in range(1, max_iter + 1):
        nxt = best_response_step(g, q, y)
        if np.any(nxt >= 1.0 - DIVERGENCE_EPS):
            return SolveReport(DIVERGED, nxt, it)
        if np.max(np.abs(nxt - q), initial=0.0) <= tol:
            return SolveReport(CONVERGED, q, it)
        q = nxt
    return SolveReport(MAX_ITER, q, max_iter)


def stability_matrix(g: InterferenceGraph, q) -> np.ndarray:
    q = _vec(g, q, "q")
    if np.any(q >= 1.0):
        raise DomainError("stability matrix undefined when some q_i = 1")
    m = g.adjacency * (q[:, None] / (1.0 - q[None, :]))
    c = -(m + m.T)
    np.fill_diagonal(c, 2.0)
    return c


def is_positive_definite(c, pivot_tol: float = PD_PIVOT_TOL) -> bool:
    """Cholesky factorization; every pivot must exceed ``pivot_tol``."""
    a = np.array(c, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12):
        raise ValueError("matrix is not symmetric")
    n = a.shape[0]
    for k in range(n):
        pivot = a[k, k]
        if pivot <= pivot_tol:
            return False
        root = np.sqrt(pivot)
        col = a[k + 1:, k] / root
        a[k + 1:, k + 1:] -= np.outer(col, col)
    return True


def rim_all(g: InterferenceGraph, q) -> np.ndarray:
    q = _vec(g, q, "q")
    if np.any(q >= 1.0):
        raise DomainError("RIM undefined when some q_j = 1")
    inv = 1.0 / (1.0 - q)
    return q * (g.csr @ inv) + (g.csr @ q) * inv


def rim(g: InterferenceGraph, q, i: int) -> float:
    return float(rim_all(g, q)[i - 1])


def jacobian_det(g: InterferenceGraph, q) -> float:
    """D(q): shares its sign and zero set with det(d theta / d q) on (0,1)^N."""
    q = _vec(g, q, "q")
    m = -(g.adjacency * q[:, None])
    np.fill_diagonal(m, 1.0 - q)
    return float(np.linalg.det(m))


def steady_state_single(n_l: int) -> float:
    if n_l < 0:
        raise ValueError("degree must be >= 0")
    return 1.0 / (n_l + 1)


def _leader_rim(x: float, same: int, others: np.ndarray) -> float:
    """RIM of a leader at common tree MAP x with ``same`` in-tree neighbors."""
    r = 2.0 * same * x / (1.0 - x)
    if others.size:
        r += float(np.sum(x / (1.0 - others) + others / (1.0 - x)))
    return r


def _solve_leader(same: int, others: np.ndarray, tol: float) -> float:
    if same == 0 and others.size == 0:
        return 1.0
    f = lambda x: _leader_rim(x, same, others) - RIM_SETPOINT
    if f(0.0) >= 0.0:
        return 0.0
    hi = 1.0 - 1e-15
    return bisect(f, 0.0, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500)


def solve_steady_state(g: InterferenceGraph, partition: TreePartition,
                       tol: float = 1e-10, max_rounds: int = 10_000) -> np.ndarray:
    """Common MAP per tree such that every leader sits at RIM = 2."""
    partition.validate(g)
    tree_of = np.array([partition.root(i) for i in range(1, g.n + 1)])
    leaders = sorted(partition.leaders)
    deps = {}
    for l in leaders:
        nbr_trees = {int(tree_of[j - 1]) for j in g.neighbors(l)}
        deps[l] = nbr_trees - {l}
    try:
        order = list(graphlib.TopologicalSorter(deps).static_order())
    except graphlib.CycleError:
        order = leaders
    value = {l: steady_state_single(g.node_degree(l)) for l in leaders}
    for _ in range(max_rounds):
        change = 0.0
        for l in order:
            nbrs = np.array(g.neighbors(l), dtype=int)
            nbr_tree = tree_of[nbrs - 1]
            same = int(np.sum(nbr_tree == l))
            others = np.array([value[int(t)] for t in nbr_tree if t != l])
            new = _solve_leader(same, others, tol)
            change = max(change, abs(new - value[l]))
            value[l] = new
        if change <= tol:
            return np.array([value[int(t)] for t in tree_of])
    raise RuntimeError(f"steady state did not settle in {max_rounds} sweeps")


def sensitivity_at_rim(n_l: int, eps: float) -> float:
    """d theta_l / d eps for a lone tree whose leader RIM is 2 + eps."""
    if n_l < 1 or 2.0 + eps <= 0:
        raise ValueError("need n_l >= 1 and 2 + eps > 0")
    q = (2.0 + eps) / (2.0 + eps + 2.0 * n_l)
    num = 2.0 * n_l * (1.0 - (n_l + 1) * q) * (1.0 - q) ** (n_l - 1)
    return num / (2.0 + eps + 2.0 * n_l) ** 2


def leader_gain(n_l: int) -> float:
    """Gain from MAP deviation to RIM error at the single-tree operating point."""
    if n_l < 1:
        raise ValueError("leader degree must be >= 1")
    return -2.0 * (n_l + 1) ** 2 / n_l


def affected_leader_rim(n_l1: int, q: float, q_m: float) -> float:
    """RIM of a leader with one neighbor held at q_m by another tree."""
    return 2.0 * (n_l1 - 1) * q / (1.0 - q) + q / (1.0 - q_m) + q_m / (1.0 - q)


def affected_operating_point(n_l1: int, q_m: float, tol: float = 1e-12) -> float:
    f = lambda x: affected_leader_rim(n_l1, x, q_m) - RIM_SETPOINT
    return bisect(f, 0.0, 1.0 - 1e-12, xtol=tol, maxiter=500)


def affected_leader_gain(n_l1: int, q_m: float, q_op: float) -> float:
    if n_l1 < 2:
        raise ValueError("affected leader needs degree >= 2")
    if not (0.0 <= q_m < 1.0) or not (0.0 < q_op < 1.0):
        raise DomainError("q_m must lie in [0, 1) and q_op in (0, 1)")
    return (-2.0 * (n_l1 - 1) / (1.0 - q_op) ** 2
            - 1.0 / (1.0 - q_m) - q_m / (1.0 - q_op) ** 2)


def follower_slope(n_l: int, n_j: int) -> float:
    """d theta_j / d q at the lone-tree MAP 1/(n_l + 1) for a follower of degree n_j."""
    q = steady_state_single(n_l)
    return (1.0 - (n_j + 1) * q) * (1.0 - q) ** (n_j - 1)


def affected_leader_margin(n_l1: int, q_m: float) -> float:
    """d theta'_l1 / d eps at eps = 0 for a leader affected by one outside neighbor."""
    q = affected_operating_point(n_l1, q_m)
    dtheta = (1.0 - q_m) * (1.0 - q) ** (n_l1 - 2) * (1.0 - n_l1 * q)
    return dtheta * (-1.0 / affected_leader_gain(n_l1, q_m, q))


def pi_stability_check(n_l: int, k_p: float, k_i: float) -> bool:
    """Jury-derived sufficient condition for the linearized PI loop."""
    if k_p <= 0 or k_i <= 0:
        return False
    return -leader_gain(n_l) * (2.0 * k_p + k_i) < 2.0


def closed_loop_poles(n_l: int, k_p: float, k_i: float) -> np.ndarray:
    k = leader_gain(n_l)
    return np.roots([1.0, -(1.0 + k * (k_p + k_i)), k * k_p])
