import os
from pathlib import Path

import pytest

from shocklab.experiments import ReplicaStore

# criterion label -> (passed, detail), filled by test_acceptance
ACCEPTANCE_LINES: dict[str, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def acceptance_store():
    """Replica arrays shared by all acceptance criteria.

    Kept on disk (``SHOCKLAB_CACHE`` or ``.acceptance-cache`` at the repo root)
    so a rerun reuses the expensive simulations. Keys cover every parameter and
    the first replicas of every array read back are recomputed as a check.
    """
    directory = os.environ.get("SHOCKLAB_CACHE") or str(Path(__file__).resolve().parents[1] / ".acceptance-cache")
    return ReplicaStore(directory, spot_check=2)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE_LINES, key=lambda k: (int(k.split()[0]), k)):
        ok, detail = ACCEPTANCE_LINES[label]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {label}: {detail}")
