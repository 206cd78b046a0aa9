import numpy as np
import pytest

from kdvlayer.flux import make_flux
from kdvlayer.functions import reference_boundary_datum, reference_initial_datum
from kdvlayer.hyperbolic import estimate_lifespan
from kdvlayer.layer import LayerHistory


@pytest.fixture(scope="session")
def quad():
    return make_flux("quadratic", k=3.0, J=(-3.0, -0.5))


@pytest.fixture(scope="session")
def lin():
    return make_flux("linear", c=1.0)


@pytest.fixture(scope="session")
def ref_data():
    return reference_initial_datum(), reference_boundary_datum()


@pytest.fixture(scope="session")
def ref_lifespan(quad, ref_data):
    return estimate_lifespan(quad, ref_data[0])


@pytest.fixture(scope="session")
def ref_history(quad, ref_data, ref_lifespan):
    u_in, u_b = ref_data
    return LayerHistory(quad, u_in, u_b, lifespan=ref_lifespan)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
