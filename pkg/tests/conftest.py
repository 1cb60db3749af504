import json
from pathlib import Path

import pytest

from spatial_aloha import topology

ORACLE_FILE = Path(__file__).parent / "oracles" / "oracle_values.json"


@pytest.fixture(scope="session")
def oracle():
    return json.loads(ORACLE_FILE.read_text())


@pytest.fixture
def fig1():
    return topology.fig1()


@pytest.fixture
def fig3():
    return topology.fig3()


@pytest.fixture
def fig5():
    return topology.fig5()
