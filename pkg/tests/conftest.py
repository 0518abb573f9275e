import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from feprnn import config
from feprnn.prnn import Prnn, PrnnLayout, PrnnParams

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

settings.register_profile(
    "suite", max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def shipped():
    """Fiber and matrix properties of the shipped placeholder calibration."""
    cfg = config.load(CONFIGS / "gen_data.toml")
    return config.fiber(cfg), config.matrix(cfg)


@pytest.fixture(scope="session")
def composite(shipped):
    """Voigt-equivalent two-point network on the shipped calibration."""
    fp, mp = shipped
    return Prnn(PrnnParams.voigt_equivalent([0.4, 0.6]), PrnnLayout(2, 1, fp, mp))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.summary_lines():
            terminalreporter.write_line(line)
