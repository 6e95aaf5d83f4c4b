import os

from hypothesis import settings

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# acceptance results, filled by tests/test_acceptance.py and echoed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for num in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[num])
