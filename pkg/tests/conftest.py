import numpy as np
import pytest

from scenemotion.dataset import demo_scene
from scenemotion.kinematics import tiny_skeleton
from scenemotion.state import StateConfig


@pytest.fixture(scope="session")
def tiny_cfg():
    return StateConfig(joints=15, samples=3)


@pytest.fixture(scope="session")
def tiny_skel():
    return tiny_skeleton()


@pytest.fixture()
def scene():
    return demo_scene()


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
