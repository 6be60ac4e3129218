import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from exitdim.spaces import FiniteSpace, FractalSpec, build_fractal

settings.register_profile("default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def gasket6():
    return build_fractal(FractalSpec("gasket", 6, (0.5, 0.5)))


@pytest.fixture(scope="session")
def koch6():
    return build_fractal(FractalSpec("koch", 6, (np.radians(5.0), np.radians(80.0))))


def random_cloud(seed: int, n: int, dim: int = 2) -> FiniteSpace:
    rng = np.random.default_rng(seed)
    pts = rng.random((n, dim))
    w = rng.random(n) + 0.1
    return FiniteSpace(pts, w / w.sum())
