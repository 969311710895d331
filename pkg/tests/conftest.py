import zlib

import pytest

from qstatemc.rng import make_rng


@pytest.fixture
def rng(request):
    # a distinct, fixed stream per test keeps tests independent of run order
    return make_rng(20240611, zlib.crc32(request.node.name.encode()))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running statistical checks")


# acceptance criterion number -> (passed, detail), filled by the ``record`` fixture
RESULTS = {}


@pytest.fixture
def record():
    def _record(number, passed, detail):
        RESULTS[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        passed, detail = RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
