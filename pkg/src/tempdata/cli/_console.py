"""Console helpers shared by the tempdata commands.

Progress lines go to stderr with a ``==>`` prefix so stdout stays free for
machine-readable output (JSON reports, ``OK``/``FAIL`` lines).
"""

from __future__ import annotations

import logging
import sys


def echo(message: str, *, prefix: str = "==>") -> None:
    sys.stderr.write(f"{prefix} {message}\n")
    sys.stderr.flush()


def configure_logging(verbose: bool = False) -> None:
    """Route library loggers to stderr; ``--verbose`` lowers the threshold to DEBUG."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def parse_cell(text: str) -> tuple[int, int]:
    """Parse an ``x,y`` goal coordinate."""
    parts = text.split(",")
    if len(parts) != 2:  # noqa: PLR2004
        msg = f"goal must be x,y, got {text!r}"
        raise ValueError(msg)
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        msg = f"goal coordinates must be integers, got {text!r}"
        raise ValueError(msg) from None
