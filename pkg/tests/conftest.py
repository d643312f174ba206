from pathlib import Path

import numpy as np
import pytest

from stochot.core import FiniteMetricSpace, Scenario, StochasticInstance, reference_instance

DATA = Path(__file__).parent / "data"


def single(cost, mu, nu, dX=None, dY=None) -> StochasticInstance:
    cost = np.asarray(cost, dtype=float)
    nx, ny = cost.shape
    X = dX or FiniteMetricSpace.discrete([f"x{i + 1}" for i in range(nx)])
    Y = dY or FiniteMetricSpace.discrete([f"y{j + 1}" for j in range(ny)])
    return StochasticInstance(X, Y, (Scenario(1.0, cost, mu, nu),))


@pytest.fixture
def i1():
    return reference_instance()


@pytest.fixture
def data_dir():
    return DATA
