"""Collects acceptance-criterion outcomes and prints one line per criterion after the run."""

import pytest

_RESULTS = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    _RESULTS[props["criterion"]] = (props["title"], report.passed, props.get("detail", ""), report.duration)


@pytest.fixture(autouse=True)
def _criterion_properties(request):
    m = request.node.get_closest_marker("criterion")
    if m is not None:
        request.node.user_properties.append(("criterion", m.args[0]))
        request.node.user_properties.append(("title", m.args[1]))


@pytest.fixture
def detail(request):
    """Attach a one-line measurement summary to the current criterion."""

    def record(text):
        request.node.user_properties.append(("detail", text))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_RESULTS):
        title, ok, info, dur = _RESULTS[k]
        terminalreporter.write_line(f"criterion {k:2d} {'PASS' if ok else 'FAIL'}  {title}  [{info}] ({dur:.1f} s)")
