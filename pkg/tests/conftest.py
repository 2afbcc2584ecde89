from __future__ import annotations

from pathlib import Path

import pytest

from tempdata.core.dataset import GoalLabelConfig, TransitionSet, label_goals
from tempdata.core.maze import (
    GridMaze,
    MazeEnv,
    PlannerPolicy,
    generate_dataset,
    load_layout,
    make_behavior_policy,
    make_env,
)
from tempdata.core.pipeline import seed_streams
from tempdata.core.representation import TemporalAutoencoder, train_repr
from tempdata.settings.base import TrainConfig, load_config

MAZE7 = Path(__file__).resolve().parents[1] / "configs" / "maze7.yaml"


@pytest.fixture(scope="session")
def open5_env() -> GridMaze:
    return GridMaze(load_layout("open5"))


@pytest.fixture(scope="session")
def open5_data(open5_env: GridMaze) -> TransitionSet:
    """A few hundred labeled planner transitions on the open 5x5 grid."""
    trajectories = generate_dataset(open5_env, PlannerPolicy(0.2), 12, 30, seed=0)
    return label_goals(trajectories, GoalLabelConfig(), seed=0, env=open5_env)


@pytest.fixture(scope="session")
def maze7_cfg() -> TrainConfig:
    return load_config(MAZE7)


@pytest.fixture(scope="session")
def maze7_env(maze7_cfg: TrainConfig) -> MazeEnv:
    return make_env(maze7_cfg.maze)


@pytest.fixture(scope="session")
def maze7_data(maze7_cfg: TrainConfig, maze7_env: MazeEnv) -> TransitionSet:
    """The labeled dataset ``tempdata gen-data`` produces from the shipped maze7 config."""
    cfg = maze7_cfg
    seeds = seed_streams(cfg.seed)
    trajectories = generate_dataset(
        maze7_env, make_behavior_policy(cfg.data), cfg.data.n_traj, cfg.data.horizon, seeds["data"]
    )
    return label_goals(trajectories, cfg.goals, seeds["label"], env=maze7_env)


@pytest.fixture(scope="session")
def maze7_encoder(maze7_cfg: TrainConfig, maze7_data: TransitionSet) -> TemporalAutoencoder:
    """Representation phase of the shipped maze7 config. Slow: only slow tests use it."""
    cfg = maze7_cfg
    result = train_repr(
        maze7_data, cfg.representation, cfg.repr_steps, seed_streams(cfg.seed)["repr"],
        width_multiplier=cfg.width_multiplier,
    )  # fmt: skip
    return result.autoencoder
