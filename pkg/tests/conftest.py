import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def tall_data():
    """Fixed n=100, p=20, m=4 dataset with full-rank predictors."""
    gen = np.random.default_rng(7)
    x = gen.standard_normal((100, 20)) @ np.diag(np.linspace(1.0, 0.2, 20))
    b = gen.standard_normal((20, 4))
    y = x @ b + 0.5 * gen.standard_normal((100, 4))
    return x, y


_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


@pytest.fixture
def acceptance_log(request):
    return request.config.stash[_ACCEPTANCE]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_ACCEPTANCE, {})
    if not log:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(log):
        ok, detail = log[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'} | {detail}")
