from pathlib import Path

import numpy as np
import pytest

from locrom.config import load_config
from locrom.pipeline import load_artifacts, run_offline

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def pitchfork_config():
    return load_config(CONFIGS / "pitchfork.txt")


@pytest.fixture(scope="session")
def modal_config():
    return load_config(CONFIGS / "modal.txt")


@pytest.fixture(scope="session")
def pitchfork_artifacts(tmp_path_factory, pitchfork_config):
    out = run_offline(pitchfork_config, tmp_path_factory.mktemp("pf") / "art")
    return load_artifacts(out)


@pytest.fixture(scope="session")
def modal_artifacts(tmp_path_factory, modal_config):
    out = run_offline(modal_config, tmp_path_factory.mktemp("modal") / "art")
    return load_artifacts(out)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
