import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fisheyedepth.geometry import FisheyeIntrinsics

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def demo_intrinsics():
    return FisheyeIntrinsics(360.0, 640.0, 400.0, 1280, 800, theta_max=math.radians(95))
