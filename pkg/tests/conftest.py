import numpy as np
import pytest

from backend.dynamics import SimConfig
from backend.history import ConstantVelocity
from backend.influence import InfluenceFunction


@pytest.fixture
def unit_kernel():
    return InfluenceFunction.constant(1.0)


@pytest.fixture
def approach_segments():
    """Two agents closing in head-on on a line: x = -1, +1 with v = +0.1, -0.1."""
    return [ConstantVelocity([-1.0], [0.1]), ConstantVelocity([1.0], [-0.1])]


@pytest.fixture
def aligned_segments():
    """Three agents sharing one constant velocity in the plane."""
    v = [0.3, -0.2]
    return [
        ConstantVelocity([0.0, 0.0], v),
        ConstantVelocity([1.0, 0.5], v),
        ConstantVelocity([-0.5, 2.0], v),
    ]


@pytest.fixture
def make_config():
    def _make(n_agents=2, dim=1, c=10.0, s=1.0, kernel=None, dt=0.01, horizon=1.0, **kwargs):
        return SimConfig(
            n_agents=n_agents,
            dim=dim,
            c=c,
            s=s,
            kernel=kernel or InfluenceFunction.constant(1.0),
            dt=dt,
            horizon=horizon,
            **kwargs,
        )

    return _make


@pytest.fixture
def random_segments():
    """Factory: n constant-velocity agents with positions in a box and speeds below s."""

    def _make(seed: int, n: int, dim: int, s: float = 1.0, spread: float = 1.0):
        rng = np.random.default_rng(seed)
        segments = []
        for _ in range(n):
            x = rng.uniform(-spread, spread, size=dim)
            v = rng.normal(size=dim)
            v *= rng.uniform(0.0, s) / max(np.linalg.norm(v), 1e-12)
            segments.append(ConstantVelocity(x, v))
        return segments

    return _make
