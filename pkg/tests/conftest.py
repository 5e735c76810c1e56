import numpy as np
import pytest
import torch

from semscene.data import make_dataset
from semscene.relevancy import OracleRelevancyProvider
from semscene.voxel import GridSpec

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def grid32() -> GridSpec:
    return GridSpec.default()


@pytest.fixture(scope="session")
def small_dataset(grid32):
    """Four generated scene views shared across tests (read-only)."""
    return make_dataset(7, 4, grid=grid32)


@pytest.fixture(scope="session")
def provider():
    return OracleRelevancyProvider(seed=0)


@pytest.fixture()
def rng():
    return np.random.default_rng(123)
