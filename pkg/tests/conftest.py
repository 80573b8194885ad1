import pytest

_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance_report():
    """Record one verdict line per acceptance criterion; printed in the terminal summary."""

    def record(number: int, passed, detail: str) -> str:
        verdict = "N/A " if passed is None else ("PASS" if passed else "FAIL")
        line = f"criterion {number:2d}: {verdict}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
