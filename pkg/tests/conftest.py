import numpy as np
import pytest

from codtsim.constants import PhysicalConstants
from codtsim.optics import InputBeam, OpticalLayout


@pytest.fixture(scope="session")
def layout():
    return OpticalLayout()


@pytest.fixture(scope="session")
def no_gravity():
    return PhysicalConstants(gravity=0.0)


@pytest.fixture(scope="session")
def input_beam():
    return InputBeam()


@pytest.fixture(scope="session")
def input_pair(input_beam):
    return (input_beam, input_beam)


@pytest.fixture(autouse=True)
def _seed_numpy():
    np.random.seed(0)
