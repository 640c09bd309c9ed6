"""Collect acceptance outcomes and print one PASS/FAIL line per criterion."""
import pytest

CRITERIA = {
    1: "slit-domain eigenvalues (r=2, N=12, >= 1.5e5 dofs)",
    2: "decay rates -r/2 +- 0.12 on the slit domain",
    3: "estimator-equivalence certification, 12 cases",
    4: "algebraic identities of the two-level setting",
    5: "oracle suites",
    6: "structural property suites under 60 s",
}

_outcomes = {}
_details = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): test belongs to acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _outcomes.setdefault(mark.args[0], []).append((item.name, rep.passed, rep.skipped))


@pytest.fixture
def detail(request):
    """``detail(text)`` attaches a measured value to the criterion summary."""
    mark = request.node.get_closest_marker("criterion")

    def add(text):
        _details.setdefault(mark.args[0], []).append(text)
    return add


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, title in CRITERIA.items():
        runs = _outcomes.get(n)
        if not runs:
            tr.write_line(f"criterion {n}: NOT RUN  {title}")
            continue
        failed = [name for name, ok, skipped in runs if not ok and not skipped]
        status = "PASS" if not failed else "FAIL"
        tr.write_line(f"criterion {n}: {status}  {title}  "
                      f"({len(runs) - len(failed)}/{len(runs)} checks)")
        for text in _details.get(n, []):
            tr.write_line(f"    {text}")
        for name in failed:
            tr.write_line(f"    failed: {name}")
