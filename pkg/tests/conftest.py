"""Shared fixtures."""

import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from vemsolver.cases.builtins.example1_case import example1
from vemsolver.cases.builtins.example2_case import example2
from vemsolver.cases.builtins.example3_case import example3
from vemsolver.models.grid import make_grid


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


@pytest.fixture
def case1():
    return example1()


@pytest.fixture
def case2():
    return example2()


@pytest.fixture
def case3():
    return example3()


@pytest.fixture
def grid1():
    return make_grid(0.0, math.pi, 101)


@pytest.fixture
def grid2():
    return make_grid(0.0, 2.0, 41)
