import os
from pathlib import Path

import numpy as np
import pytest

from bicure.datagen import generate, setting

DATA_DIR = Path(__file__).parent / "data"
RETINOPATHY = DATA_DIR / "retinopathy_wide.csv"

_ACCEPTANCE_LINES = []


def record_acceptance(criterion, passed, detail):
    line = f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} | {detail}"
    _ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def retinopathy_path():
    if not RETINOPATHY.exists():
        pytest.skip("retinopathy fixture absent")
    return RETINOPATHY


@pytest.fixture(scope="session")
def retinopathy(retinopathy_path):
    from bicure.data import load_retinopathy

    return load_retinopathy(retinopathy_path)


@pytest.fixture(scope="session")
def sa_data():
    """Covariate-free Gumbel data with R=1, n=200."""
    return generate(setting("S_A", R=1.0, n=200, seed=11))


@pytest.fixture(scope="session")
def a_data():
    """Setting A with covariates, n=200."""
    return generate(setting("A", n=200, seed=7))


@pytest.fixture(autouse=True)
def _single_thread(monkeypatch):
    monkeypatch.setenv("BICURE_THREADS", os.environ.get("BICURE_THREADS", "1"))
