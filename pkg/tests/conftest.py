import numpy as np
import pytest

from ctbnlab import CtbnModel


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def chain3():
    """Three binary nodes, 0 -> 1 -> 2, strong preference rates 9/1."""
    follow = np.array([[[-9.0, 9.0], [1.0, -1.0]],
                       [[-1.0, 1.0], [9.0, -9.0]]])
    root = np.array([[[-5.0, 5.0], [5.0, -5.0]]])
    return CtbnModel((2, 2, 2), ((), (0,), (1,)), (root, follow, follow))


@pytest.fixture
def two_node():
    """Binary pair with an arrow 0 -> 1; small enough to enumerate."""
    follow = np.array([[[-3.0, 3.0], [1.0, -1.0]],
                       [[-1.0, 1.0], [6.0, -6.0]]])
    root = np.array([[[-2.0, 2.0], [2.0, -2.0]]])
    return CtbnModel((2, 2), ((), (0,)), (root, follow))
