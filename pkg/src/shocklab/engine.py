"""Choice of event-loop implementation.

The compiled core is used when it was built and not disabled through the
``SHOCKLAB_ENGINE`` environment variable (``python`` forces the fallback).
Both produce identical trajectories for identical seeds.
"""

from __future__ import annotations

import os

from .errors import UsageError

try:
    from ._engine import CEngine
except ImportError:  # pragma: no cover - depends on the build
    CEngine = None

ENGINES = ("auto", "c", "python")


def available() -> list[str]:
    return ["c", "python"] if CEngine is not None else ["python"]


def default_engine() -> str:
    forced = os.environ.get("SHOCKLAB_ENGINE", "").strip().lower()
    if forced in ("c", "python"):
        return forced
    return "c" if CEngine is not None else "python"


def select(name: str = "auto"):
    """Engine class for ``name`` in {"auto", "c", "python"}."""
    from .dynamics import PyEngine

    if name not in ENGINES:
        raise UsageError(f"unknown engine {name!r}; expected one of {ENGINES}")
    if name == "auto":
        name = default_engine()
    if name == "c":
        if CEngine is None:
            raise UsageError("the compiled engine is not built; reinstall with Cython available")
        return CEngine
    return PyEngine
