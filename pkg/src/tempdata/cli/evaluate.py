"""``tempdata eval`` and ``tempdata heatmap`` — read trained checkpoints.

``eval`` rolls out an agent from the maze's start cells toward each goal over
the configured seed sweep and writes a JSON report with per-goal and aggregate
success statistics. Besides the trained policy, ``--agent`` accepts the BFS
``oracle``, a uniform ``random`` agent, and ``greedy`` (one-step descent of
the learned distance, which needs only the representation checkpoint).

``heatmap`` writes the learned distance from every free cell to a goal as an
``x,y,d`` CSV; ``--corners`` does this for the four corner goals at once.
"""

from __future__ import annotations

from pathlib import Path
from typing import Annotated

import cyclopts

from tempdata.cli import _console, _paths
from tempdata.cli.data import ConfigArg, SeedArg, VerboseArg
from tempdata.core.maze import make_env
from tempdata.core.pipeline import AgentKind, RunLayout, evaluate_run, run_heatmap
from tempdata.core.representation import corner_goals
from tempdata.settings.base import load_config

GoalsArg = Annotated[
    list[str] | None,
    cyclopts.Parameter(help="Goal cells as x,y; repeat for several goals.", consume_multiple=True),
]


def evaluate(
    run_dir: Path | None = None,
    *,
    config: ConfigArg = None,
    seed: SeedArg = None,
    goal: GoalsArg = None,
    agent: Annotated[AgentKind, cyclopts.Parameter(help="Agent to evaluate.")] = "policy",
    out: Annotated[
        Path | None, cyclopts.Parameter(help="Report path (default RUN_DIR/eval_report.json).")
    ] = None,
    verbose: VerboseArg = False,
) -> None:
    """Evaluate goal-reaching success and write a JSON report."""
    _console.configure_logging(verbose)
    overrides = {} if seed is None else {"seed": seed}
    cfg = load_config(_paths.resolve_config(config), **overrides)
    run = RunLayout(run_dir) if run_dir is not None else None
    goals = [_console.parse_cell(g) for g in goal] if goal else None
    report = evaluate_run(cfg, run, goals=goals, agent_kind=agent, echo=_console.echo)
    text = report.model_dump_json(indent=2) + "\n"
    path = out or (run.eval_report if run is not None else None)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        _console.echo(f"wrote {path}")
    _console.echo(
        f"success {report.aggregate.mean:.3f} "
        f"(2-std band {report.aggregate.lower:.3f}..{report.aggregate.upper:.3f})"
    )
    print(text, end="")  # noqa: T201


def heatmap(
    checkpoint: Path,
    out: Path,
    *,
    goal: Annotated[str | None, cyclopts.Parameter(help="Goal cell as x,y.")] = None,
    corners: Annotated[
        bool, cyclopts.Parameter(help="One CSV per corner goal; OUT is a directory.")
    ] = False,
    config: ConfigArg = None,
    verbose: VerboseArg = False,
) -> None:
    """Write learned distances to a goal over every free cell.

    CHECKPOINT is a repr checkpoint or a run directory containing one.
    """
    _console.configure_logging(verbose)
    cfg = load_config(_paths.resolve_config(config))
    if checkpoint.is_dir():
        checkpoint = RunLayout(checkpoint).repr_ckpt
    if corners:
        goals = corner_goals(make_env(cfg.maze))
    elif goal is not None:
        goals = [_console.parse_cell(goal)]
    else:
        raise ValueError("pass --goal x,y or --corners")
    summaries = run_heatmap(checkpoint, cfg, goals, out, echo=_console.echo)
    for summary in summaries:
        print(summary.model_dump_json())  # noqa: T201
