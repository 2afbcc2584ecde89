"""Run configuration for every tempdata phase.

:class:`TrainConfig` composes the section models that live next to the code
consuming them (maze, data, goal labeling, representation, dynamics,
rollouts, policy) plus the run-wide scalars.

Settings loading strategy
-------------------------
pydantic-settings sources, highest priority first:

1. **Init keywords** — overrides passed by the CLI (``--seed``, ``--no-rollouts``).
2. **Environment variables** — ``TEMPDATA_`` prefix, ``__`` between nesting
   levels, e.g. ``TEMPDATA_REPRESENTATION__TAU=0.9`` or ``TEMPDATA_SEED=3``.
3. **YAML config file** — the file given to :func:`load_config`; reference
   files live under ``configs/``.
4. **Field defaults** — desk-scale values: hyperparameters follow the
   published defaults, step counts and widths are scaled for a laptop.

Unknown keys are rejected at every level.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

from pydantic import Field
from pydantic_settings import (
    BaseSettings,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
    YamlConfigSettingsSource,
)

from tempdata.core.augmentation import RolloutConfig
from tempdata.core.dataset import GoalLabelConfig
from tempdata.core.dynamics import DynamicsConfig
from tempdata.core.maze import DataConfig, MazeConfig
from tempdata.core.policy import PolicyConfig
from tempdata.core.representation import ReprConfig


class TrainConfig(BaseSettings):
    """Everything a run needs, from maze layout to evaluation protocol."""

    model_config = SettingsConfigDict(
        env_prefix="TEMPDATA_",
        env_nested_delimiter="__",
        extra="forbid",
    )

    seed: int = Field(default=0, ge=0)
    maze: MazeConfig = Field(default_factory=MazeConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    goals: GoalLabelConfig = Field(default_factory=GoalLabelConfig)
    representation: ReprConfig = Field(default_factory=ReprConfig)
    dynamics: DynamicsConfig = Field(default_factory=DynamicsConfig)
    rollout: RolloutConfig = Field(default_factory=RolloutConfig)
    policy: PolicyConfig = Field(default_factory=PolicyConfig)

    repr_steps: int = Field(default=100_000, ge=1)
    dynamics_steps: int = Field(default=50_000, ge=1)
    policy_steps: int = Field(default=100_000, ge=1)
    width_multiplier: float = Field(
        default=0.25, gt=0, description="Uniform scale on every 512-unit hidden layer."
    )
    naive_state_dynamics: bool = Field(
        default=False,
        description="Baseline arm: dynamics on raw states instead of the temporal latent space.",
    )

    eval_episodes: int = Field(default=50, ge=1)
    eval_horizon: int = Field(default=100, ge=1)
    eval_seeds: list[int] = Field(default_factory=lambda: list(range(8)), min_length=1)
    curve_episodes: int = Field(
        default=10, ge=1, description="Episodes per goal for each learning-curve point."
    )

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        """CLI overrides, then env vars, then the YAML file when one is bound."""
        sources: list[PydanticBaseSettingsSource] = [init_settings, env_settings]
        if settings_cls.model_config.get("yaml_file"):
            sources.append(YamlConfigSettingsSource(settings_cls))
        return tuple(sources)


def load_config(path: str | Path | None = None, **overrides: Any) -> TrainConfig:
    """Build a :class:`TrainConfig` from ``path`` (YAML), the environment and ``overrides``."""
    if path is None:
        return TrainConfig(**overrides)
    path = Path(path)
    if not path.is_file():
        msg = f"config file not found: {path}"
        raise FileNotFoundError(msg)
    bound = type(
        "TrainConfigFile",
        (TrainConfig,),
        {"model_config": SettingsConfigDict(**{**TrainConfig.model_config, "yaml_file": path})},
    )
    loaded = bound(**overrides)
    return TrainConfig.model_validate(loaded.model_dump())


def canonical_json(cfg: TrainConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def config_hash(cfg: TrainConfig) -> str:
    """SHA-256 of the canonical JSON form of ``cfg``."""
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def json_schema() -> dict:
    """Return the JSON Schema for run config files."""
    return TrainConfig.model_json_schema()


if __name__ == "__main__":
    print(json.dumps(json_schema(), indent=2))  # noqa: T201
