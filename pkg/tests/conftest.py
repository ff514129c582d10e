import numpy as np
import pytest

from liqlab.stochastic import RngStream


@pytest.fixture
def rng() -> np.random.Generator:
    return RngStream(seed=20240, stream_id=0).generator()
