import numpy as np
import pytest

from hkdmpc.robot import load_robot_params


@pytest.fixture(scope="session")
def a1():
    return load_robot_params("a1")


@pytest.fixture(scope="session")
def mini_cheetah():
    return load_robot_params("mini_cheetah")
