import pytest

ACCEPTANCE_LINES: list[str] = []


def pytest_addoption(parser):
    parser.addoption("--extended", action="store_true", default=False,
                     help="run long tests marked 'extended'")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--extended"):
        return
    skip = pytest.mark.skip(reason="extended test; pass --extended to run")
    for item in items:
        if "extended" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture()
def report():
    """Record one PASS/FAIL line per criterion and fail the test on FAIL."""
    def _report(n: int, ok: bool, detail: str):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return _report
