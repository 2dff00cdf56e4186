import pytest


@pytest.fixture
def criterion_report(request):
    """Emit one visible pass/fail line per acceptance criterion.

    The line is written through the terminal reporter so it shows up
    even with captured output; the assert then records the verdict.
    """
    reporter = request.config.pluginmanager.getplugin("terminalreporter")

    def emit(criterion: str, passed: bool, detail: str = "") -> None:
        status = "PASS" if passed else "FAIL"
        line = f"[criterion {criterion}] {status}"
        if detail:
            line += f"  {detail}"
        if reporter is not None:
            reporter.write_line(line)
        assert passed, line

    return emit
