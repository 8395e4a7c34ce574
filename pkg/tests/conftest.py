"""Shared paths and pre-analyzed fixture workspaces."""

from __future__ import annotations

from pathlib import Path

import pytest

from forge.cli import GlobalConfig, WorkspaceAnalysis, analyze_workspace

FIXTURE_ROOT = Path(__file__).resolve().parent / "fixtures" / "workspaces"
GOLDEN_ROOT = Path(__file__).resolve().parent / "goldens"


def analysis_for(name: str, distro: str = "humble") -> WorkspaceAnalysis:
    cfg = GlobalConfig(default_distro=distro)
    return analyze_workspace(FIXTURE_ROOT / name, cfg)


@pytest.fixture(scope="session")
def fixture_root() -> Path:
    return FIXTURE_ROOT


@pytest.fixture(scope="session")
def minimal_analysis() -> WorkspaceAnalysis:
    return analysis_for("minimal")


@pytest.fixture(scope="session")
def multi_repo_analysis() -> WorkspaceAnalysis:
    return analysis_for("multi_repo")


@pytest.fixture(scope="session")
def catkin_analysis() -> WorkspaceAnalysis:
    return analysis_for("catkin_noetic", distro="noetic")


@pytest.fixture(scope="session")
def unresolved_analysis() -> WorkspaceAnalysis:
    return analysis_for("unresolved")


def pytest_terminal_summary(terminalreporter, exitstatus, config) -> None:
    """One line per acceptance criterion, after the normal summary."""

    from acceptance_report import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(RESULTS):
        status, title, detail = RESULTS[criterion]
        suffix = f" ({detail})" if detail else ""
        terminalreporter.write_line(f"{status} {criterion} {title}{suffix}")
