import numpy as np
import pytest
import torch

from preheat.electrochem import make_model
from preheat.params import load_parameters

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def params():
    return load_parameters()


@pytest.fixture(scope="session")
def dfn(params):
    return make_model(params, "dfn")


@pytest.fixture(scope="session")
def reduced(params):
    return make_model(params, "reduced")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def one_c_density(params):
    return params.current_density(params.capacity_ah)
