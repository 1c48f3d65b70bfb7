import copy

import numpy as np
import pytest
from hypothesis import settings

from tamedns.config import REFERENCE_CONFIG, build_problem, random_field, resolve_config, shear_field
from tamedns.spectral import TorusGrid

settings.register_profile("repo", derandomize=True, deadline=None, max_examples=40)
settings.load_profile("repo")

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def grid16():
    return TorusGrid(16)


@pytest.fixture(scope="session")
def grid8():
    return TorusGrid(8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def reference_cfg(tmp_path):
    raw = copy.deepcopy(REFERENCE_CONFIG)
    raw["out"] = str(tmp_path / "run")
    return resolve_config(raw)


@pytest.fixture
def reference_problem(reference_cfg):
    return build_problem(reference_cfg)


def smooth_field(grid, scale=1.0, seed=0, s=2.0):
    return random_field(grid, s, scale, seed)


def shear(grid, a=1.0):
    return shear_field(grid, a)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
