import numpy as np
import pytest

from cylfbm import cylinder, fbm


@pytest.fixture(scope="session")
def grid64():
    return fbm.TimeGrid(1.0, 64)


@pytest.fixture(scope="session")
def grid128():
    return fbm.TimeGrid(1.0, 128)


@pytest.fixture(scope="session")
def sequences():
    return cylinder.make_sequences("default")


def covariance_se(cov, i, j, n):
    """Standard error of an empirical covariance entry for Gaussian samples."""
    return np.sqrt((cov[i, i] * cov[j, j] + cov[i, j] ** 2) / n)
