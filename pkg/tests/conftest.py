import warnings

import pytest

from ccgeo.structures import StructureWarning, catalog


@pytest.fixture(autouse=True)
def _quiet_structure_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StructureWarning)
        yield


@pytest.fixture(scope="session")
def heis():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StructureWarning)
        return catalog("heisenberg1")


@pytest.fixture(scope="session")
def engel():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StructureWarning)
        return catalog("engel")


@pytest.fixture(scope="session")
def free33():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StructureWarning)
        return catalog("free33")


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
