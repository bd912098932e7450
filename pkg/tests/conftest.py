import time

import numpy as np
import pytest

from ballhoop.config import ScenarioConfig
from ballhoop.model import PlantParams


@pytest.fixture(scope="session")
def plant():
    return PlantParams()


@pytest.fixture(scope="session")
def cfg():
    return ScenarioConfig()


@pytest.fixture(scope="session")
def task1(cfg):
    """Task 1 trajectory and TV-LQR schedule at the default settings, solved once."""
    from ballhoop.scenarios import design_task1

    t0 = time.perf_counter()
    traj, gains = design_task1(cfg)
    return {"traj": traj, "gains": gains, "wall": time.perf_counter() - t0}


@pytest.fixture(scope="session")
def task2(cfg):
    """Full Task 2 pipeline: search, OCP, balance design and the 5 s verification run."""
    from ballhoop.scenarios import run_task2

    t0 = time.perf_counter()
    res = run_task2(cfg, t_end=5.0)
    return {"res": res, "wall": time.perf_counter() - t0}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def acceptance_log(pytestconfig):
    lines = []
    pytestconfig._acceptance_lines = lines
    return lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
