import numpy as np
import pytest

from radelast import State, default_model, init_state, make_grid


@pytest.fixture(scope="session")
def model():
    return default_model()


def perturbed_state(grid, stretch=1.0, epsilon=0.05):
    return init_state("perturbed", stretch, grid, epsilon=epsilon)


def random_feasible_velocity(grid, state, tau, rng, scale=0.02):
    """A random velocity small enough to keep the lifted alpha increasing."""
    v = scale * rng.standard_normal(grid.rho.size)
    v[-1] = 0.0
    a23 = state.alpha ** (2.0 / 3.0)
    for _ in range(60):
        alpha = state.alpha + 3 * tau * a23 * v
        if alpha[0] > 0 and np.all(np.diff(alpha) > 0):
            return v
        v *= 0.5
    raise RuntimeError("could not build a feasible random velocity")


def observed_orders(values):
    values = np.asarray(values, dtype=float)
    return np.log2(values[:-1] / values[1:])
