"""Registry of acceptance outcomes, printed as a terminal summary section.

Each acceptance check records exactly one line here; conftest's
pytest_terminal_summary hook prints them after the test run so the
pass/fail verdict per criterion is visible in plain pytest output.
"""

from __future__ import annotations

RESULTS: dict[str, tuple[str, str, str]] = {}


def record(criterion: str, title: str, status: str, detail: str = "") -> None:
    RESULTS[criterion] = (status, title, detail)
