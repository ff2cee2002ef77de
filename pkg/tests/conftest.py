import pytest

from latwave.dispersion import Problem
from latwave.kernels import DiracKernel
from latwave.models import host_vector


@pytest.fixture(scope="session")
def hv1():
    """host_vector(a=0.5, b=1), d=1, tau=1, point-mass kernel."""
    return Problem(host_vector(0.5, 1.0), DiracKernel(), d=1.0, tau=1.0)


@pytest.fixture(scope="session")
def hv1_front(hv1):
    from latwave.dispersion import find_cstar
    from latwave.wavefront import relax_profile
    cs = find_cstar(hv1)
    return relax_profile(hv1, cs.c_star + 0.5)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[key])
