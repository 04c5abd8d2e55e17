import math

import numpy as np
import pytest

from eulerkv import MaterialParams, Scenario, StoredEnergyModel


def stream(x, y, amplitude=1.0):
    """Single-cell flow of ``psi = A sin(pi x) sin(pi y)`` on the unit square."""
    return amplitude * np.stack([math.pi * np.sin(math.pi * x) * np.cos(math.pi * y),
                                 -math.pi * np.cos(math.pi * x) * np.sin(math.pi * y)])


def shear(x, y):
    """Smooth velocity with a nonzero divergence."""
    return 0.5 * np.stack([
        math.pi * np.sin(math.pi * x) * np.cos(math.pi * y) + 0.3 * np.sin(2 * math.pi * x) * np.cos(math.pi * y),
        -math.pi * np.cos(math.pi * x) * np.sin(math.pi * y) + 0.2 * np.cos(math.pi * x) * np.sin(2 * math.pi * y)])


def reference_scenario(nx=24, dt=4e-3, t_end=1.0, **changes):
    """The decaying-shear reference: unit stream flow, F0 = I, no loads."""
    scn = Scenario(nx=nx, material=MaterialParams(rho=1.0, D_lambda=0.1, D_mu=0.1, nu=1e-3, p=3.0),
                   energy=StoredEnergyModel(K=1.0, G=1.0, eta=0.1), v0=stream, t_end=t_end, dt=dt,
                   name="decaying-shear")
    return scn.with_(**changes) if changes else scn


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
