import numpy as np
import pytest

import entroflow as ef


@pytest.fixture(scope="session")
def gaussian_ref():
    return ef.discretize_reference(ef.quadratic(1.0), 400, (-8.0, 8.0))


@pytest.fixture(scope="session")
def gaussian_ref_coarse():
    return ef.discretize_reference(ef.quadratic(1.0), 200, (-8.0, 8.0))


@pytest.fixture(scope="session")
def uniform_ref():
    return ef.discretize_reference(ef.box(0.0, 1.0), 200, (0.0, 1.0))


@pytest.fixture(scope="session")
def quartic_ref():
    return ef.discretize_reference(ef.quartic(1.0, 1.0), 400, (-4.5, 4.5))


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)


def random_grid_measure(gamma, rng, roughness=1.5):
    """Random finite-entropy measure on gamma's grid (bounded density tilt)."""
    sup = gamma.support_indices()
    xs = gamma.grid[sup]
    span = xs[-1] - xs[0]
    bump = rng.uniform(0.2, roughness) * np.sin(
        rng.uniform(0.5, 4.0) * 2.0 * np.pi * (xs - xs[0]) / span + rng.uniform(0.0, 6.29)
    )
    w = np.zeros(gamma.n)
    w[sup] = gamma.weights[sup] * np.exp(np.clip(bump, -6.0, 6.0))
    return ef.grid_measure(gamma, w)


def random_atomic(rng, n=None, scale=1.0, shift=0.0):
    n = int(rng.integers(5, 50)) if n is None else n
    return ef.DiscreteMeasure.from_atoms(
        shift + scale * rng.normal(size=n), rng.dirichlet(np.ones(n))
    )
