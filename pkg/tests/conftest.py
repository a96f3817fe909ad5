from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ghostlab import model, wave

settings.register_profile(
    "ghostlab",
    deadline=None,
    derandomize=True,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ghostlab")

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

# filled by tests/test_acceptance.py; printed once at the end of the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k[2:])):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture(scope="session")
def defaults():
    return model.paper_defaults()


@pytest.fixture(scope="session")
def ideal_cfg(defaults):
    """Perfect correlation, one central bucket point, pinhole detector."""
    return defaults.replace(corr_sigma=np.inf, n_bucket_points=1, point_width=0.0)


@pytest.fixture(scope="session")
def ideal_intensity(ideal_cfg):
    return wave.detector_intensity(ideal_cfg)


@pytest.fixture(scope="session")
def paper_like():
    return model.load_config(CONFIG_DIR / "paper_like.cfg")


@pytest.fixture(scope="session")
def uncorrelated():
    return model.load_config(CONFIG_DIR / "uncorrelated.cfg")
