from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .topology import InterferenceGraph


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class TreePartition:
    """Forest of leader-rooted trees. All IDs are 1-based.

    ``parent`` maps every follower to its parent; leaders have no entry.
    """

    n: int
    leaders: frozenset[int]
    parent: dict[int, int] = field(default_factory=dict)

    @classmethod
    def from_arrays(cls, is_leader: np.ndarray, parent: np.ndarray) -> "TreePartition":
        """Build from 0-based engine arrays (``parent[i] == -1`` for leaders)."""
        leaders = frozenset(int(i) + 1 for i in np.flatnonzero(is_leader))
        par = {int(i) + 1: int(p) + 1 for i, p in enumerate(parent)
               if not is_leader[i] and p >= 0}
        return cls(len(is_leader), leaders, par)

    def role(self, i: int) -> str:
        return "leader" if i in self.leaders else "follower"

    def root(self, i: int) -> int:
        seen = set()
        while i not in self.leaders:
            if i in seen or i not in self.parent:
                raise PartitionError(f"user {i} does not reach a leader")
            seen.add(i)
            i = self.parent[i]
        return i

    def trees(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {l: [] for l in sorted(self.leaders)}
        for i in range(1, self.n + 1):
            out[self.root(i)].append(i)
        return out

    def depth(self, i: int) -> int:
        d = 0
        while i not in self.leaders:
            i = self.parent[i]
            d += 1
        return d

    def height(self, leader: int) -> int:
        return max(self.depth(i) for i in self.trees()[leader])

    def max_height(self) -> int:
        return max((self.depth(i) for i in range(1, self.n + 1)), default=0)

    def validate(self, g: InterferenceGraph) -> None:
        if self.n != g.n:
            raise PartitionError("partition size does not match graph")
        for l in self.leaders:
            if l in self.parent:
                raise PartitionError(f"leader {l} has a parent")
        for j, p in self.parent.items():
            if not g.adjacency[j - 1, p - 1]:
                raise PartitionError(f"parent {p} of {j} is not a neighbor")
        for i in range(1, self.n + 1):
            self.root(i)
