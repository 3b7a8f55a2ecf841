import numpy as np
import pytest

from densepath import kernels


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=list(kernels.BACKENDS) if kernels.numba_available() else ["numpy"])
def backend(request):
    prev = kernels.backend
    kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(prev)


def pytest_terminal_summary(terminalreporter):
    from verdicts import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
