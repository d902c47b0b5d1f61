"""Acceptance bookkeeping: ``@pytest.mark.criterion(n, title)`` groups tests
under a numbered criterion and the terminal summary prints one PASS/FAIL
line per criterion, plus any values recorded with the ``note`` fixture."""

from collections import defaultdict

import pytest

_outcomes: dict[int, list[bool]] = defaultdict(list)
_titles: dict[int, str] = {}
_notes: dict[int, list[str]] = defaultdict(list)


def _criterion(item):
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return None
    number, title = mark.args
    _titles[number] = title
    return number


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    number = _criterion(item)
    if number is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _outcomes[number].append(rep.passed)


@pytest.fixture
def note(request):
    """Record a value to show next to the criterion's summary line."""
    number = _criterion(request.node)

    def add(text: str) -> None:
        _notes[number].append(text)
    return add


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_titles):
        results = _outcomes.get(number, [])
        verdict = "PASS" if results and all(results) else "FAIL"
        line = f"criterion {number:2d} {verdict}  {_titles[number]}"
        if _notes[number]:
            line += "  (" + "; ".join(_notes[number]) + ")"
        terminalreporter.write_line(line)
