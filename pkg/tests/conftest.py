import numpy as np
import pytest

from tssim.grid import Branch, Bus, GridModel, Load


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def two_bus_grid():
    """Slack at bus 1 (1.0 pu), PQ load bus 2, one x=0.5 line."""
    return GridModel(
        buses=[Bus(1, v_mag=1.0, kind="slack"), Bus(2, kind="pq")],
        branches=[Branch(1, 2, r=0.0, x=0.5)],
        loads=[Load(2, p=0.1, q=0.0)],
    )
