import numpy as np
import pytest
from hypothesis import settings

from meanreflect.grid_paths import BarrierPair, GridPath, TimeGrid

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def random_instance(rng: np.random.Generator, n: int, width_min: float = 0.0):
    """Random walk y with a random band l <= u containing y_0."""
    grid = TimeGrid(np.arange(n) / max(n - 1, 1) if n > 1 else np.array([0.0, 1.0]))
    n = len(grid)
    y = np.cumsum(rng.normal(scale=rng.uniform(0.05, 1.0), size=n))
    y -= y[0]
    mid = np.cumsum(rng.normal(scale=0.1, size=n))
    mid -= mid[0]
    half = width_min / 2 + rng.uniform(0.0, 1.5) * np.abs(np.sin(np.arange(n) * rng.uniform(0, 0.2))) \
        + rng.uniform(0.05, 1.0)
    lo, up = mid - half, mid + half
    y[0] = rng.uniform(lo[0], up[0])
    return GridPath(grid, y), BarrierPair(GridPath(grid, lo), GridPath(grid, up))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
