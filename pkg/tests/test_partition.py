import numpy as np
import pytest

from spatial_aloha.partition import PartitionError, TreePartition
from spatial_aloha.sale import elect_leaders


def test_fig3_trees(fig3):
    p = elect_leaders(fig3)
    assert p.leaders == {1, 7}
    assert p.parent[2] == 1 and p.parent[6] == 2
    assert p.height(1) == 2 and p.height(7) == 1
    assert sorted(p.trees()[7]) == [7, 8, 9]
    p.validate(fig3)


def test_fig5_preliminary_keeps_7(fig5):
    p = elect_leaders(fig5)
    assert p.leaders == {1, 7}
    assert p.parent[8] == 7
    assert p.root(10) == 7


def test_from_arrays_round_trip():
    p = TreePartition.from_arrays(np.array([True, False, False]), np.array([-1, 0, 1]))
    assert p.leaders == {1}
    assert p.parent == {2: 1, 3: 2}
    assert p.max_height() == 2
    assert p.role(1) == "leader" and p.role(3) == "follower"


def test_cycle_is_rejected(fig1):
    p = TreePartition(3, frozenset({1}), {2: 3, 3: 2})
    with pytest.raises(PartitionError):
        p.root(2)


def test_parent_must_be_neighbor(fig1):
    p = TreePartition(3, frozenset({1}), {2: 1, 3: 1})
    with pytest.raises(PartitionError, match="not a neighbor"):
        p.validate(fig1)
