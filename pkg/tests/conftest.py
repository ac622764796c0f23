import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from uwbsel.env import EnvironmentConfig, build_environment  # noqa: E402
from uwbsel.measurement import NoiseModel  # noqa: E402

NOISELESS = NoiseModel(0.0, 0.0)


def make_env(n_x, n_y=None, beacons=None, n_beacons=4, p_nlos=0.0, seed=0, cell=1.0):
    return build_environment(EnvironmentConfig(
        n_x=n_x, n_y=n_x if n_y is None else n_y, cell_size=cell, beacons=beacons,
        n_beacons=n_beacons, p_nlos=p_nlos, seed=seed))


@pytest.fixture
def small_env():
    return make_env(10, n_beacons=4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
