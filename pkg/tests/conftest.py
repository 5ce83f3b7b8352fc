import os

from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=300, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


# ---------------------------------------------------------------------------
# acceptance bookkeeping: criteria run last and report one line each

ACCEPTANCE_LINES: list[str] = []
PROPERTY_OUTCOMES: dict[str, str] = {}


def pytest_collection_modifyitems(session, config, items):
    items.sort(key=lambda item: item.module.__name__ == "test_acceptance")


def pytest_runtest_logreport(report):
    if "test_acceptance" in report.nodeid:
        return
    if report.when == "call" or report.outcome != "passed":
        if hasattr(report, "wasxfail"):
            outcome = "xfailed" if report.skipped else "xpassed"
        else:
            outcome = report.outcome
        if PROPERTY_OUTCOMES.get(report.nodeid) != "failed":
            PROPERTY_OUTCOMES[report.nodeid] = outcome


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
