import numpy as np
import pytest

from qbm2ho import kernels


@pytest.fixture(scope="session")
def regression_kt():
    sd = kernels.SpectralDensity.ohmic(2.0, 0.1, 20.0)
    return kernels.tabulate_kernels(sd, 10.0, 2.0, 0.01)


@pytest.fixture
def rng():
    return np.random.default_rng(7)
