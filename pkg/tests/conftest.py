import pytest

_ACCEPTANCE_RESULTS: dict[str, str] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(name): names an acceptance criterion for the summary"
    )


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    """Compile the numba kernels once up front so JIT time never lands
    inside a timed assertion."""
    from builders import path_graph
    from gtab import structural

    g = path_graph(4)
    structural.local_features(g)
    structural.betweenness(g)
    structural.closeness(g)


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    report = yield
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        record = report.when == "call" or (
            report.when == "setup" and report.outcome != "passed"
        )
        if record:
            status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}.get(
                report.outcome, report.outcome.upper()
            )
            name = marker.args[0]
            # a test already marked FAIL must not be overwritten by teardown
            if _ACCEPTANCE_RESULTS.get(name) != "FAIL":
                _ACCEPTANCE_RESULTS[name] = status
    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"{_ACCEPTANCE_RESULTS[name]}  {name}")
