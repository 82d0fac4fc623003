import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("lexbandit", deadline=None, max_examples=60)
settings.load_profile("lexbandit")

from lexbandit import BanditInstance, NoiseModel, tripeak_instance  # noqa: E402


@pytest.fixture(scope="session")
def tripeak10():
    return tripeak_instance(10)


@pytest.fixture
def small_instance():
    return BanditInstance(
        np.array([[0.9, 0.5], [0.5, 0.9], [0.9, 0.2], [0.3, 0.3]]), NoiseModel(0.1)
    )


# acceptance verdicts collected by test_acceptance.py and echoed at the end of the run
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(ACCEPTANCE, key=lambda x: x[0]):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
