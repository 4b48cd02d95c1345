import numpy as np
import pytest

from lrvoter.green import GreenModel
from lrvoter.kernel import JumpSampler, KernelParams
from lrvoter.spectral import SpectralModel


@pytest.fixture(scope="session")
def p105():
    return KernelParams(1, 0.5)


@pytest.fixture(scope="session")
def p1075():
    return KernelParams(1, 0.75)


@pytest.fixture(scope="session")
def green105(p105):
    return GreenModel(p105)


@pytest.fixture(scope="session")
def green1075(p1075):
    return GreenModel(p1075)


@pytest.fixture(scope="session")
def spec105(green105):
    return green105.spectral


@pytest.fixture(scope="session")
def spec1075(green1075):
    return green1075.spectral


@pytest.fixture(scope="session")
def sampler105(p105):
    return JumpSampler.build(p105)


@pytest.fixture(scope="session")
def sampler1075(p1075):
    return JumpSampler.build(p1075)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance lines, echoed at the end of the run so they survive output capture
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
