import functools

import pytest

from oelab.equilibrium import compute_equilibrium
from oelab.orthopoly import build_basis
from oelab.potential import GAUSSIAN, QUARTIC, Potential
from oelab.sampler import metropolis_run

# Wide-domain Gaussian used where results are compared against closed forms for
# the untruncated weight: with d1 = 1 the truncation to [-L, L] shifts the
# Jacobi coefficients near k = n + 2*sqrt(n) by ~1e-5, which is real, not a bug.
GAUSSIAN_WIDE = Potential((0.0, 0.5), d1=2.0)

_POTENTIALS = {
    "gauss": GAUSSIAN,
    "gauss_wide": GAUSSIAN_WIDE,
    "quartic": QUARTIC,
}


@functools.lru_cache(maxsize=None)
def _basis(name: str, n: int):
    return build_basis(_POTENTIALS[name], n)


@functools.lru_cache(maxsize=None)
def _equilibrium(name: str):
    return compute_equilibrium(_POTENTIALS[name])


@pytest.fixture(scope="session")
def basis_factory():
    """Memoized basis builder shared across the whole test session."""
    return _basis


@pytest.fixture(scope="session")
def equilibrium_factory():
    return _equilibrium


@pytest.fixture(scope="session")
def potentials():
    return dict(_POTENTIALS)


SAMPLER_N = 64
SAMPLER_SEED = 12345
SAMPLER_STEPS = 100_000 + 10_000 * SAMPLER_N  # burn-in plus 10^4 thinned samples


@functools.lru_cache(maxsize=None)
def _chain(beta: int):
    return metropolis_run(GAUSSIAN, SAMPLER_N, beta, SAMPLER_STEPS, seed=SAMPLER_SEED)


@pytest.fixture(scope="session")
def chain_factory():
    """Memoized Gaussian Metropolis chains at n = 64, shared across tests."""
    return _chain
