# thalassa/tests/conftest.py - Shared fixtures: grids, a calibrated synthetic ocean, EOF bases

import numpy as np
import pytest

from thalassa.eof import EofBasis, build_basis
from thalassa.profiles import DepthGrid, ProfileSet
from thalassa.synth import SynthOceanSpec, generate_ocean, make_geometry


@pytest.fixture(scope="session")
def grid() -> DepthGrid:
    """Default working grid: 2 m over 300 m (151 points)"""
    return DepthGrid.from_max_depth(300.0, 2.0)


@pytest.fixture
def small_grid() -> DepthGrid:
    return DepthGrid.from_max_depth(100.0, 5.0)


@pytest.fixture(scope="session")
def ocean(grid) -> ProfileSet:
    return generate_ocean(SynthOceanSpec(count=200), np.random.default_rng(7), grid)


@pytest.fixture(scope="session")
def basis(ocean) -> EofBasis:
    return build_basis(ocean, 5)


@pytest.fixture(scope="session")
def basis2(basis) -> EofBasis:
    """Two leading EOFs, for recovery checks"""
    return basis.truncated(2)


@pytest.fixture(scope="session")
def geometry():
    return make_geometry(120.0, 101, 300.0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
