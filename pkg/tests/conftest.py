import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import acceptance_log  # noqa: E402
from carpetdyn import toral  # noqa: E402
from carpetdyn.tower import build_stage, plan_orbits  # noqa: E402


@pytest.fixture(scope="session")
def cat():
    return toral.CAT_MAP


@pytest.fixture(scope="session")
def plan6(cat):
    return plan_orbits(cat, 6)


@pytest.fixture(scope="session")
def stage6(plan6):
    """Depth-6 stage; its truncations form a tower."""
    return build_stage(plan6, 6)


@pytest.fixture(scope="session")
def stage1(plan6):
    return build_stage(plan6, 1)


def pytest_terminal_summary(terminalreporter):
    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acceptance_log.LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
