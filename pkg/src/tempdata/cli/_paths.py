"""Resolve ``--config`` names and the reference configs shipped in ``configs/``.

A ``--config`` value is either a path to a YAML file or the bare name of a
reference config (``maze7`` for ``configs/maze7.yaml``). Reference configs live
at the repository root, so the checkout is located by searching upward from
the working directory and from this module for ``configs/``, with an explicit
override via ``TEMPDATA_REPO_ROOT``.
"""

from __future__ import annotations

import os
from functools import cache
from pathlib import Path

from tempdata.core.errors import TempdataError

_MARKER = Path("configs")


class ConfigNotFoundError(TempdataError):
    """Raised when a ``--config`` value is neither a file nor a reference config name."""

    def __init__(self, name: str, searched: Path | None) -> None:
        where = f" or {searched}" if searched is not None else ""
        super().__init__(
            f"config {name!r} is not a file{where}. Pass a YAML path or set TEMPDATA_REPO_ROOT."
        )


def _search_from(start: Path) -> Path | None:
    start = start.resolve()
    for candidate in (start, *start.parents):
        if (candidate / _MARKER).is_dir() and (candidate / "pyproject.toml").is_file():
            return candidate
    return None


@cache
def repo_root() -> Path | None:
    """The checkout holding the reference configs, or ``None`` for a wheel install."""
    override = os.environ.get("TEMPDATA_REPO_ROOT")
    if override:
        return Path(override).resolve()
    for start in (Path.cwd(), Path(__file__).parent):
        found = _search_from(start)
        if found is not None:
            return found
    return None


def configs_dir() -> Path | None:
    root = repo_root()
    return None if root is None else root / _MARKER


def resolve_config(name: str | None) -> Path | None:
    """Map a ``--config`` value to a YAML path; ``None`` means defaults only."""
    if name is None:
        return None
    path = Path(name)
    if path.is_file():
        return path
    configs = configs_dir()
    if configs is not None:
        candidate = configs / f"{name}.yaml"
        if candidate.is_file():
            return candidate
    raise ConfigNotFoundError(name, None if configs is None else configs / f"{name}.yaml")
