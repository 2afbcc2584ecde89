"""``tempdata train`` — the representation, dynamics and policy phases.

``--phase all`` (the default) runs the three phases in order. A single phase
can be rerun on its own as long as the checkpoints it depends on exist in the
run directory. The ablation arms differ from the default run only in the
flag they set:

* ``--no-rollouts`` trains the policy on real transitions only.
* ``--naive-state-dynamics`` fits the dynamics model on raw states, so
  rollouts never pass through the temporal latent space.

With ``--export-json`` every checkpoint is also written as JSON (``repr.json``
next to ``repr.ckpt`` and so on) for inspection outside tempdata.
"""

from __future__ import annotations

from pathlib import Path
from typing import Annotated, Any

import cyclopts

from tempdata.cli import _console, _paths
from tempdata.cli.data import ConfigArg, SeedArg, VerboseArg
from tempdata.core.pipeline import Phase, RunLayout
from tempdata.core.pipeline import train as run_train
from tempdata.settings.base import load_config


def train(
    dataset: Path,
    run_dir: Path,
    *,
    config: ConfigArg = None,
    seed: SeedArg = None,
    phase: Annotated[Phase, cyclopts.Parameter(help="Which phase to run.")] = "all",
    no_rollouts: Annotated[
        bool, cyclopts.Parameter(help="Disable latent rollouts (real data only).")
    ] = False,
    naive_state_dynamics: Annotated[
        bool, cyclopts.Parameter(help="Train dynamics on raw states instead of latents.")
    ] = False,
    export_json: Annotated[
        bool, cyclopts.Parameter(help="Also write each checkpoint as JSON next to it.")
    ] = False,
    verbose: VerboseArg = False,
) -> None:
    """Train checkpoints from DATASET into RUN_DIR."""
    _console.configure_logging(verbose)
    overrides: dict[str, Any] = {}
    if seed is not None:
        overrides["seed"] = seed
    if no_rollouts:
        overrides["rollout"] = {"enabled": False}
    if naive_state_dynamics:
        overrides["naive_state_dynamics"] = True
    cfg = load_config(_paths.resolve_config(config), **overrides)
    if not dataset.is_file():
        msg = f"dataset not found: {dataset}"
        raise FileNotFoundError(msg)
    outcome = run_train(
        cfg, dataset, RunLayout(run_dir), phase=phase, json_export=export_json, echo=_console.echo
    )
    print(outcome.model_dump_json(indent=2))  # noqa: T201
