import pytest

from longliq import figure1_params

_CRITERIA: dict = {}


@pytest.fixture
def fig1():
    return figure1_params()


@pytest.fixture
def fig1_damped():
    return figure1_params(damped=True)


@pytest.fixture
def criterion():
    """Record one acceptance outcome, then assert it."""
    def record(number, title, ok, detail):
        _CRITERIA[number] = (title, bool(ok), detail)
        print(f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} | {detail}")
        assert ok, f"criterion {number} ({title}) failed: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[k]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {k:>2}. {title}  [{detail}]")
