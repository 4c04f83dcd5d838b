import numpy as np
import pytest

from nearswipt.scenario import SystemConfig, build_array_geometry, noise_power


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def geo_small():
    return build_array_geometry(8, 4, 7.5e9)


@pytest.fixture(scope="session")
def geo_40x10():
    return build_array_geometry(40, 10, 7.5e9)


@pytest.fixture
def sigma2():
    return noise_power(SystemConfig())


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
