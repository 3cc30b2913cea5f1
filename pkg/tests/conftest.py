import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kerr_resonators.mesh import DomainSpec, build_mesh
from kerr_resonators.spectra import static_operator, top_eigenpairs

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.function_scoped_fixture]
)
settings.load_profile("default")

_ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE_LINES


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def ball_mesh():
    return build_mesh(DomainSpec.ball(1.0, 0.25))


@pytest.fixture(scope="session")
def ball_pairs(ball_mesh):
    return top_eigenpairs(static_operator(ball_mesh), 5)


@pytest.fixture(scope="session")
def disk_mesh():
    return build_mesh(DomainSpec.disk(1.0, 0.1))


@pytest.fixture(scope="session")
def ball_dimer():
    return build_mesh(DomainSpec.dimer(DomainSpec.ball(1.0, 0.25), 3.0))


@pytest.fixture(scope="session")
def ball_dimer_pairs(ball_dimer):
    return top_eigenpairs(static_operator(ball_dimer), 4)


@pytest.fixture(scope="session")
def disk_dimer():
    return build_mesh(DomainSpec.dimer(DomainSpec.disk(1.0, 0.2), 1.5))
