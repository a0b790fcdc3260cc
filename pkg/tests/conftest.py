from pathlib import Path

import numpy as np
import pytest

from nsst_fusion.image import load_image

DATA = Path(__file__).parent / "data"
PAIR_STEMS = ("astronaut", "camera", "coffee")


def load_pair(stem):
    return load_image(DATA / f"{stem}_ir.png"), load_image(DATA / f"{stem}_vis.png")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def camera_pair():
    return load_pair("camera")


# one line per acceptance criterion, echoed in the terminal summary
CRITERIA: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[number])
