"""Per-criterion PASS/FAIL summary for the acceptance suite."""
import pytest

CRITERIA = {
    1: "gradient correctness",
    2: "engine determinism across thread counts",
    3: "font-category sampling law and provenance ranges",
    4: "warp and blur oracles",
    5: "desk-scale CNN-7 training reaches 90% holdout accuracy",
    6: "A+S >= max(A, S) on the scene-like holdout",
    7: "two-stage protocol integrity",
    8: "checkpoint round-trip is bit-exact",
}

_outcomes: dict[int, list[str]] = {}
_details: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number n")


def pytest_runtest_logreport(report):
    crit = getattr(report, "criterion", None)
    if crit is None:
        return
    if report.when == "call" or report.outcome != "passed":
        _outcomes.setdefault(crit, []).append(report.outcome)
    if report.when == "call":
        _details.setdefault(crit, []).extend(v for k, v in report.user_properties if k == "detail")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = marker.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(CRITERIA):
        results = _outcomes.get(crit)
        if results is None:
            status = "NOT RUN"
        elif all(r == "passed" for r in results):
            status = "PASS"
        elif any(r == "failed" for r in results):
            status = "FAIL"
        else:
            status = "SKIPPED"
        terminalreporter.write_line(f"criterion {crit} ({CRITERIA[crit]}): {status}")
        for line in _details.get(crit, []):
            terminalreporter.write_line(f"    {line}")
