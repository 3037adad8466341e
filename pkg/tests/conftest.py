from __future__ import annotations

import time

import pytest
from hypothesis import settings

from mmvot_lab.analysis import forgetting_study, paired_study
from mmvot_lab.lab.training import TrainConfig

settings.register_profile("default", deadline=None)
settings.load_profile("default")

SEEDS = tuple(range(10))


class Timed:
    def __init__(self, fn):
        start = time.perf_counter()
        self.value = fn()
        self.seconds = time.perf_counter() - start


@pytest.fixture(scope="session")
def paired_default() -> Timed:
    """Separate, cross-task, and parallel-mixed scores at default settings, seeds 0-9."""
    return Timed(lambda: paired_study(TrainConfig(), SEEDS))


@pytest.fixture(scope="session")
def forgetting_default() -> Timed:
    """Previous-task SR of serial-replay / parallel / serial-naive, seeds 0-9."""
    return Timed(lambda: forgetting_study(TrainConfig(), SEEDS))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
