"""``tempdata verify-oracles`` — self-checks of the exact reference solvers.

Prints one ``OK``/``FAIL`` line per check and exits non-zero if any check
fails. With ``--goal`` it also writes the BFS/value-iteration table for that
goal on the configured maze.
"""

from __future__ import annotations

from pathlib import Path
from typing import Annotated

import cyclopts

from tempdata.cli import _console, _paths
from tempdata.cli.data import ConfigArg, VerboseArg
from tempdata.core.maze import make_env
from tempdata.core.oracle import oracle_table, run_oracle_checks, write_oracle_csv
from tempdata.settings.base import load_config


def verify_oracles(
    *,
    config: ConfigArg = None,
    goal: Annotated[
        str | None, cyclopts.Parameter(help="Also tabulate BFS steps and V* toward this x,y goal.")
    ] = None,
    out: Annotated[Path, cyclopts.Parameter(help="Where to write the table.")] = Path(
        "oracle.csv"
    ),
    verbose: VerboseArg = False,
) -> None:
    """Run the oracle self-checks on the built-in mazes."""
    _console.configure_logging(verbose)
    cfg = load_config(_paths.resolve_config(config))
    gamma = cfg.representation.gamma
    checks = run_oracle_checks(gamma)
    for check in checks:
        print(f"{'OK:  ' if check.ok else 'FAIL:'} {check.name} — {check.detail}")  # noqa: T201
    if goal is not None:
        rows = oracle_table(make_env(cfg.maze), _console.parse_cell(goal), gamma)
        write_oracle_csv(out, rows)
        _console.echo(f"wrote {len(rows)} rows to {out}")
    failed = [check.name for check in checks if not check.ok]
    if failed:
        _console.echo(f"{len(failed)} oracle check(s) failed: {', '.join(failed)}")
        raise SystemExit(1)
