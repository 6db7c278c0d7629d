import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fraclab.acceptance import _torsion

settings.register_profile(
    "repo", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repo"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def torsion_cache():
    """Shared torsion solves ``(p, s, n, classical) -> (u, report, params)`` on (-1, 1)."""
    return _torsion
