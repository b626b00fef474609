import numpy as np
import pytest

from moab.tensor import Tensor

GRAD_TOL = 1e-4
N_POINTS = 10


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def leaf(data) -> Tensor:
    return Tensor(data, requires_grad=True)
