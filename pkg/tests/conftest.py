import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def poisson_exact_sve():
    from greencheb.bivariate import build_cdr, sve
    from greencheb.problems import poisson_green

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cdr = build_cdr(poisson_green, (0, 1), (0, 1), 1e-6, 1e-6, max_rank=256)
    return cdr, sve(cdr)


@pytest.fixture(scope="session")
def poisson_learned():
    """Default Poisson run: 100 samples, sigma 1e-2, 2000 epochs (about two minutes)."""
    from greencheb.experiments import ExperimentConfig, learn
    from greencheb.problems import ProblemSpec

    return learn(ProblemSpec("poisson"), ExperimentConfig())


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
