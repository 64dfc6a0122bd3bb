import numpy as np
import pytest

from anomsense.env import generate_training_data, stream_rng
from pathlib import Path

from anomsense.model import ExperimentConfig, load_config

STABLE_CONFIG = Path(__file__).resolve().parent.parent / "configs" / "stable.json"


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def paper_config():
    return ExperimentConfig()


@pytest.fixture(scope="session")
def stable_config():
    """Paper setup with the learning rates that train reliably."""
    return load_config(STABLE_CONFIG)


@pytest.fixture(scope="session")
def datasets():
    """One 10^5-sample training set per correlation level of the paper's setup."""
    cache = {}

    def get(rho, count=100_000):
        key = (rho, count)
        if key not in cache:
            cfg = ExperimentConfig(correlation=rho)
            cache[key] = generate_training_data(cfg.prior, count, stream_rng(11, "data", int(rho * 1000)))
        return cache[key]

    return get


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_report():
    def report(number, ok, detail):
        ACCEPTANCE_LINES.append((number, f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"))
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
