import pytest

from popstab.metrics import SnapshotPair
from popstab.simulation import BASE_ATTRIBUTES, STABLE_OUTCOME_OVERRIDES


def _configured(name):
    attr = next(a for a in BASE_ATTRIBUTES if a.name == name)
    return SnapshotPair.from_props(attr.props, STABLE_OUTCOME_OVERRIDES[name], attr.levels)


@pytest.fixture
def numenq_pair():
    return _configured("NumEnq")


@pytest.fixture
def ccother_pair():
    return _configured("CCother")


# one summary line per acceptance criterion, shown whether or not tests pass
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
