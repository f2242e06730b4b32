import numpy as np
import pytest
from hypothesis import settings

from colonloc.camera_model import PinholeIntrinsics
from colonloc.synthetic import make_tube

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def tube():
    return make_tube(length=30.0, curvature=0.3, seed=1, n_spots=12)


@pytest.fixture(scope="session")
def K64():
    return PinholeIntrinsics.from_fov(64, 64, 100.0)
