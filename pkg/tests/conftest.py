import os

# quiet console, no log files during tests
os.environ.setdefault("ZFUMES_LOG_LEVEL", "WARNING")
os.environ.setdefault("ZFUMES_LOG_DIR", "")

import numpy as np
import pytest

from zfumes.physics.bose_hubbard import Propagator


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(autouse=True)
def _fresh_propagators():
    yield
    Propagator.clear_cache()
