import numpy as np
import pytest

from mlkpde import coefficient as coef
from mlkpde import kernel as ker
from mlkpde import lattice as lat


def problem_setup(name: str, s: int, n_max: int, alpha: int = 1, lam: float = 0.6):
    """Model, kernel spec, and CBC lattice for a named preset."""
    model = coef.preset(name, s=s)
    recipe = ker.WeightRecipe(lam=lam, bbar=coef.bbar_sequence(model), alpha=alpha)
    spec = ker.KernelSpec(alpha, ker.serendipitous_weights(recipe))
    lattice = lat.cbc_construct(n_max, s, spec.gamma, alpha)
    return model, spec, lattice


@pytest.fixture(scope="session")
def easy8():
    """Easy preset at s=8 with a 2^8-point lattice (shared, immutable)."""
    return problem_setup("easy", 8, 2**8)


@pytest.fixture(scope="session")
def hard8():
    return problem_setup("hard", 8, 2**8)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260809)
