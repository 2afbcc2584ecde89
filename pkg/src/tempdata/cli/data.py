"""``tempdata gen-data`` — generate and label an offline dataset.

Writes the dataset container to ``OUT`` and ``<stem>.manifest.json`` next to
it. Regenerating with the manifest's seed and config reproduces the same
``dataset_sha256``.
"""

from __future__ import annotations

from pathlib import Path
from typing import Annotated

import cyclopts

from tempdata.cli import _console, _paths
from tempdata.core.dataset import load_dataset, write_trajectories_csv, write_transitions_csv
from tempdata.core.pipeline import gen_data as run_gen_data
from tempdata.settings.base import load_config

ConfigArg = Annotated[
    str | None,
    cyclopts.Parameter(help="YAML config path or the name of a file under configs/ (e.g. maze7)."),
]
SeedArg = Annotated[int | None, cyclopts.Parameter(help="Override the config's seed.")]
VerboseArg = Annotated[bool, cyclopts.Parameter(help="Log at DEBUG level.")]


def gen_data(
    out: Path,
    *,
    config: ConfigArg = None,
    seed: SeedArg = None,
    csv: Annotated[
        bool, cyclopts.Parameter(help="Also write <stem>.trajectories.csv and <stem>.labeled.csv.")
    ] = False,
    verbose: VerboseArg = False,
) -> None:
    """Generate behavior trajectories on a maze, relabel goals, and save the dataset."""
    _console.configure_logging(verbose)
    overrides = {} if seed is None else {"seed": seed}
    cfg = load_config(_paths.resolve_config(config), **overrides)
    out.parent.mkdir(parents=True, exist_ok=True)
    manifest = run_gen_data(cfg, out, echo=_console.echo)
    if csv:
        trajectories, labeled, _ = load_dataset(out)
        write_trajectories_csv(out.with_name(out.stem + ".trajectories.csv"), trajectories)
        write_transitions_csv(out.with_name(out.stem + ".labeled.csv"), labeled)
    _console.echo(
        f"wrote {manifest.n_transitions} transitions "
        f"({manifest.terminal_fraction:.1%} terminal) to {out}"
    )
    print(manifest.model_dump_json(indent=2))  # noqa: T201
