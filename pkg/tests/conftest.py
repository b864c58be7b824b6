from hypothesis import settings

# property tests draw from a fixed sequence so reruns are reproducible
settings.register_profile("fixed", derandomize=True)
settings.load_profile("fixed")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
