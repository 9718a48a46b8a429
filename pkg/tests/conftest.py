import numpy as np
import pytest

_CRITERIA = []


def pytest_addoption(parser):
    parser.addoption(
        "--full-scale", action="store_true", default=False,
        help="run the N = 512 spot checks (tens of minutes)",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--full-scale"):
        return
    skip = pytest.mark.skip(reason="needs --full-scale")
    for item in items:
        if "full_scale" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(autouse=True, scope="session")
def _isolated_cache(tmp_path_factory):
    mp = pytest.MonkeyPatch()
    mp.setenv("DLRWAVE_CACHE", str(tmp_path_factory.mktemp("dlrwave-cache")))
    yield
    mp.undo()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def criterion():
    """Record one pass/fail line per acceptance criterion."""
    def record(number, passed, detail):
        _CRITERIA.append((number, bool(passed), detail))
        return passed
    return record


ALL_CRITERIA = range(1, 9)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    recorded = {number: (passed, detail) for number, passed, detail in _CRITERIA}
    for number in ALL_CRITERIA:
        if number in recorded:
            passed, detail = recorded[number]
            terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {number}: SKIP  not run in this session")
