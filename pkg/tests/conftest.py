import numpy as np
import pytest
from hypothesis import strategies as st

from dynamo_tori.grid import Topology, TorusGrid

TOPOLOGIES = list(Topology)


@st.composite
def grids(draw, min_side=2, max_side=7, max_colors=4):
    m = draw(st.integers(min_side, max_side))
    n = draw(st.integers(min_side, max_side))
    k_max = draw(st.integers(1, max_colors))
    topology = draw(st.sampled_from(TOPOLOGIES))
    cells = draw(st.lists(st.integers(1, k_max), min_size=m * n, max_size=m * n))
    return TorusGrid(m, n, k_max, topology, cells)


def random_grid(rng: np.random.Generator, m, n, k_max, topology) -> TorusGrid:
    return TorusGrid(m, n, k_max, topology, rng.integers(1, k_max + 1, size=m * n))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
