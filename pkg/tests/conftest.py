"""Per-criterion PASS/FAIL lines for the acceptance suite."""

_results: dict[str, str] = {}
_titles: dict[str, str] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        if item.get_closest_marker("acceptance") is not None:
            doc = (item.obj.__doc__ or item.name).strip().splitlines()[0]
            _titles[item.nodeid] = doc


def pytest_runtest_logreport(report):
    if report.nodeid not in _titles:
        return
    if report.when == "call" or report.outcome != "passed":
        # a setup/teardown failure also counts against the criterion
        if report.nodeid not in _results or report.outcome != "passed":
            _results[report.nodeid] = "PASS" if report.outcome == "passed" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _titles:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, title in _titles.items():
        status = _results.get(nodeid, "NOT RUN")
        terminalreporter.write_line(f"{status:7s} {title}")
