import numpy as np
import pytest

from retailts.data_core import synthesize_panel


@pytest.fixture(scope="session")
def panel():
    return synthesize_panel(42, 2, 730)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
