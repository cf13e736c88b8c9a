import pytest


@pytest.fixture
def record(request):
    """Log one acceptance verdict line; printed again in the terminal summary."""
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])

    def _record(criterion, ok, detail=""):
        verdict = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        line = f"[criterion {criterion}] {verdict}  {detail}".rstrip()
        lines.append(line)
        print(line)

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get("_acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: s.split("]")[0]):
            terminalreporter.write_line(line)
