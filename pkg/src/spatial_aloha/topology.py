"""Interference graphs: construction, random geometric generation, text I/O.

Users are numbered 1..n in every external format. Internally the adjacency
is a 0-based numpy array, so ``g.adjacency[i - 1, j - 1]`` is ``a_ij``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy import sparse

MAX_CONNECT_ATTEMPTS = 10_000


class TopologyError(ValueError):
    pass


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class InterferenceGraph:
    n: int
    edges: frozenset[tuple[int, int]]
    positions: np.ndarray | None = None
    adjacency: np.ndarray = field(init=False, repr=False)
    degree: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        adj = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edges:
            adj[i - 1, j - 1] = adj[j - 1, i - 1] = True
        adj.setflags(write=False)
        deg = adj.sum(axis=1)
        deg.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "degree", deg)
        assert np.array_equal(adj, adj.T) and not adj.diagonal().any()

    @property
    def csr(self) -> sparse.csr_matrix:
        # cached by hand; frozen dataclass forbids functools.cached_property writes
        cached = self.__dict__.get("_csr")
        if cached is None:
            cached = sparse.csr_matrix(self.adjacency.astype(float))
            object.__setattr__(self, "_csr", cached)
        return cached

    def neighbors(self, i: int) -> list[int]:
        """1-based neighbor IDs of user ``i``."""
        return [int(j) + 1 for j in np.flatnonzero(self.adjacency[i - 1])]

    def node_degree(self, i: int) -> int:
        return int(self.degree[i - 1])

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def __eq__(self, other):
        if not isinstance(other, InterferenceGraph):
            return NotImplemented
        return self.n == other.n and self.edges == other.edges

    def __hash__(self):
        return hash((self.n, self.edges))


def build_graph(n: int, edges: Iterable[tuple[int, int]]) -> InterferenceGraph:
    if n < 1:
        raise TopologyError(f"user count must be >= 1, got {n}")
    canon = set()
    for i, j in edges:
        i, j = int(i), int(j)
        if not (1 <= i <= n and 1 <= j <= n):
            raise TopologyError(f"edge ({i}, {j}) out of range 1..{n}")
        if i == j:
            raise TopologyError(f"self-loop on user {i}")
        canon.add((min(i, j), max(i, j)))
    return InterferenceGraph(n, frozenset(canon))


def is_connected(g: InterferenceGraph) -> bool:
    seen = np.zeros(g.n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    adj = g.adjacency
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(adj[u] & ~seen):
            seen[v] = True
            queue.append(v)
    return bool(seen.all())


def _geometric_edges(pos: np.ndarray, radius: float) -> list[tuple[int, int]]:
    diff = pos[:, None, :] - pos[None, :, :]
    close = (diff ** 2).sum(-1) <= radius * radius
    ii, jj = np.nonzero(np.triu(close, k=1))
    return [(int(a) + 1, int(b) + 1) for a, b in zip(ii, jj)]


def random_geometric(n: int, area: float, radius: float, seed: int | None = None,
                     max_attempts: int = MAX_CONNECT_ATTEMPTS) -> InterferenceGraph:
    """Uniform placement in a sqrt(area) square; regenerate until connected."""
    if n < 1 or area <= 0 or radius <= 0:
        raise TopologyError("need n >= 1, area > 0, range > 0")
    rng = np.random.default_rng(seed)
    side = np.sqrt(area)
    for _ in range(max_attempts):
        pos = rng.uniform(0.0, side, size=(n, 2))
        g = InterferenceGraph(n, frozenset(_geometric_edges(pos, radius)), pos)
        if is_connected(g):
            return g
    raise GenerationError(f"no connected topology after {max_attempts} attempts")


def to_text(g: InterferenceGraph) -> str:
    lines = [f"n={g.n}"]
    lines += [f"{i} {j}" for i, j in g.sorted_edges()]
    return "\n".join(lines) + "\n"


def parse_text(text: str) -> InterferenceGraph:
    n = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if n is None:
            if not line.startswith("n="):
                raise TopologyError(f"line {lineno}: expected 'n=<N>', got {raw!r}")
            try:
                n = int(line[2:])
            except ValueError:
                raise TopologyError(f"line {lineno}: bad user count {raw!r}") from None
            continue
        parts = line.split()
        if len(parts) != 2:
            raise TopologyError(f"line {lineno}: expected '<i> <j>', got {raw!r}")
        try:
            edges.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise TopologyError(f"line {lineno}: non-integer user index {raw!r}") from None
    if n is None:
        raise TopologyError("missing 'n=<N>' header")
    return build_graph(n, edges)


def save(g: InterferenceGraph, path: str | Path) -> None:
    Path(path).write_text(to_text(g))


def load(path: str | Path) -> InterferenceGraph:
    return parse_text(Path(path).read_text())


# Builtin reference topologies. The 9-user set satisfies: user 1 has degree 4,
# longest tree path 6->2->1, user 5 bridges to user 7. The 10-user set adds
# user 10 hanging off user 8, so users 7 and 8 tie on degree.
FIG1_EDGES = [(1, 2), (2, 3)]
FIG3_EDGES = [(1, 2), (1, 3), (1, 4), (1, 5), (2, 3), (2, 6), (3, 4),
              (5, 7), (7, 8), (7, 9), (8, 9)]
FIG5_EDGES = FIG3_EDGES + [(8, 10)]


def fig1() -> InterferenceGraph:
    return build_graph(3, FIG1_EDGES)


def fig3() -> InterferenceGraph:
    return build_graph(9, FIG3_EDGES)


def fig5() -> InterferenceGraph:
    return build_graph(10, FIG5_EDGES)


def complete(n: int) -> InterferenceGraph:
    return build_graph(n, [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)])


def cycle(n: int) -> InterferenceGraph:
    return build_graph(n, [(i, i % n + 1) for i in range(1, n + 1)])


BUILTINS = {"fig1": fig1, "fig3": fig3, "fig5": fig5}
