import numpy as np
import pytest

from lagsync.controllers import DesiredTrajectory, JointProfile
from lagsync.dynamics import default_model

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def arm():
    return default_model("two-link-arm")


@pytest.fixture(scope="session")
def cart():
    return default_model("cart-double-pendulum")


@pytest.fixture(params=["two-link-arm", "cart-double-pendulum"])
def model(request):
    return default_model(request.param)


def ring4_trajectory():
    """Cart position ramp with two slow pendulum oscillations."""
    return DesiredTrajectory.from_profiles([
        JointProfile(rate=0.2),
        JointProfile(terms=((1.0, 0.02 * np.pi, 0.0),)),
        JointProfile(offset=np.pi / 4, terms=((-np.pi / 4, 0.08 * np.pi, 0.0),)),
    ])


def arm_trajectory():
    return DesiredTrajectory.from_profiles([
        JointProfile(terms=((1.0, np.pi, -np.pi / 2),)),
        JointProfile(offset=2.0, terms=((-2.0, 0.6 * np.pi, 0.0),)),
    ])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
