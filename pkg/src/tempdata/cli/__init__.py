"""The ``tempdata`` command-line interface.

The commands follow the order of a run::

    tempdata gen-data data/maze7.tdat --config maze7
    tempdata train data/maze7.tdat runs/maze7 --config maze7
    tempdata eval runs/maze7 --config maze7
    tempdata heatmap runs/maze7 heatmaps/ --corners --config maze7
    tempdata verify-oracles

Run ``tempdata --help`` for the full command tree.
"""

from __future__ import annotations

import sys

import cyclopts
from pydantic import ValidationError

from tempdata.cli import data, evaluate, oracles, train
from tempdata.core.errors import TempdataError

app = cyclopts.App(
    name="tempdata",
    help="Temporal-distance-aware offline model-based RL on small mazes.",
    version_flags=["--version"],
)

app.command(data.gen_data, name="gen-data")
app.command(train.train, name="train")
app.command(evaluate.evaluate, name="eval")
app.command(evaluate.heatmap, name="heatmap")
app.command(oracles.verify_oracles, name="verify-oracles")


def main() -> None:
    """Console-script entrypoint.

    Errors a user can act on (a bad maze file, a missing checkpoint, an
    out-of-range config value) become a one-line message and exit code 1;
    numerical aborts during training exit with 2.
    """
    try:
        app()
    except TempdataError as exc:
        sys.stderr.write(f"tempdata: error: {exc}\n")
        raise SystemExit(exc.exit_code) from None
    except (ValidationError, FileNotFoundError, ValueError) as exc:
        sys.stderr.write(f"tempdata: error: {exc}\n")
        raise SystemExit(1) from None


__all__ = ["app", "main"]
