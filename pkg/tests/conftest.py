import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from l1indep.partition import CubicPartition, PairedSample  # noqa: E402


@pytest.fixture
def half_grid():
    return CubicPartition(1, 1, 0.5, 0.5)


@pytest.fixture
def diagonal_pair():
    return PairedSample([0.1, 0.9], [0.1, 0.9])


@pytest.fixture
def factorized_square():
    return PairedSample([0.1, 0.1, 0.6, 0.6], [0.1, 0.6, 0.1, 0.6])


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)
