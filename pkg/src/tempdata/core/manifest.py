"""Schema for the ``<dataset>.manifest.json`` written next to every dataset.

A dataset manifest records what it takes to regenerate a dataset bit for bit
(seed, maze hash, config hash, sizes) and the SHA-256 of the resulting
container, so a regeneration can be checked by hash comparison.

These Pydantic models serve two purposes:

* **Validation** — :func:`load_manifest` parses a manifest so a malformed or
  hand-edited file fails fast with field-level errors.
* **Schema** — :func:`json_schema` emits a JSON Schema for the file. Run
  ``python -m tempdata.core.manifest`` to print it.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from tempdata.core.artifacts import FORMAT_VERSION

SHA256_PATTERN = r"^[0-9a-f]{64}$"


class DatasetManifest(BaseModel):
    """Provenance of one generated dataset."""

    model_config = ConfigDict(extra="forbid")

    format_version: int = FORMAT_VERSION
    seed: int
    config_hash: str = Field(pattern=SHA256_PATTERN)
    maze: str = Field(description="Layout name or path the dataset was generated on.")
    maze_hash: str = Field(pattern=SHA256_PATTERN)
    variant: Literal["grid", "point"]
    behavior: Literal["planner", "random"]
    n_traj: int = Field(ge=1)
    horizon: int = Field(ge=2)
    n_transitions: int = Field(ge=1)
    terminal_fraction: float = Field(ge=0, le=1)
    dataset_sha256: str = Field(pattern=SHA256_PATTERN)


def manifest_path(dataset: str | Path) -> Path:
    dataset = Path(dataset)
    return dataset.with_name(dataset.stem + ".manifest.json")


def write_manifest(path: str | Path, manifest: DatasetManifest) -> None:
    Path(path).write_text(manifest.model_dump_json(indent=2) + "\n")


def load_manifest(path: str | Path) -> DatasetManifest:
    """Load and validate a dataset manifest from ``path``."""
    return DatasetManifest.model_validate_json(Path(path).read_text())


def json_schema() -> dict:
    """Return the JSON Schema for dataset manifests."""
    return DatasetManifest.model_json_schema()


if __name__ == "__main__":
    import json

    print(json.dumps(json_schema(), indent=2))  # noqa: T201
