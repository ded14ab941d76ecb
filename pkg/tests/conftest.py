import pytest

CRITERIA = {
    1: "joint-state overlap with the ideal entangled state",
    2: "P_e versus the closed-form fringe (RMS)",
    3: "residual particle-branch fringe contrast",
    4: "coherent/vacuum overlaps",
    5: "Wigner engine",
    6: "Wigner negativity structure",
    7: "decoherence",
    8: "oracle equivalences",
    9: "interface determinism",
}

_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and not report.failed:
        return
    n = marker.args[0]
    prev = _results.get(n, ("PASS", 0.0))
    status = "FAIL" if report.failed or prev[0] == "FAIL" else "PASS"
    _results[n] = (status, prev[1] + report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        status, secs = _results[n]
        terminalreporter.write_line(f"criterion {n} {status} ({secs:.2f} s): {CRITERIA[n]}")
