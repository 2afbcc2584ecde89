"""Transition storage, hindsight goal relabeling and mixed-ratio batch sampling.

Transitions are kept column-wise in a :class:`TransitionSet` (one array per
field), which is what every training loop consumes. Two stores exist during a
run: the labeled real dataset ``D`` (a frozen ``TransitionSet``) and the
synthetic rollout buffer ``D_hat`` (a :class:`TransitionStore`, append-only
with FIFO eviction). ``source`` tags provenance and is never rewritten.

Each transition carries two goal flags:

* ``success`` — ``goal_reward(s, g)``, the reward ``r_g(s)`` the temporal
  losses consume;
* ``terminal`` — ``goal_reward(s_next, g)``, the done mask.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from tempdata.core.artifacts import read_container, write_container
from tempdata.core.errors import EmptyDatasetError, EmptySyntheticBufferError
from tempdata.core.maze import ACTION_DIM, STATE_DIM, MazeEnv, Trajectory

logger = logging.getLogger(__name__)

REAL = 0
SYNTHETIC = 1

# Goal branches, in GoalLabelConfig field order.
BRANCH_CURRENT = 0
BRANCH_FUTURE = 1
BRANCH_UNIFORM = 2


class GoalLabelConfig(BaseModel):
    """Mixture over the three hindsight goal sources."""

    model_config = ConfigDict(extra="forbid")

    p_random_state_as_goal: float = Field(
        default=0.2, ge=0, description="Use the transition's own state as goal."
    )
    p_future_in_traj: float = Field(
        default=0.5,
        ge=0,
        description="Use a later state of the same trajectory (geometric offset).",
    )
    p_uniform_random: float = Field(
        default=0.3, ge=0, description="Use a uniformly random dataset state."
    )
    gamma: float = Field(
        default=0.99,
        gt=0,
        lt=1,
        description="Discount of the geometric future-offset distribution.",
    )

    @model_validator(mode="after")
    def _probabilities_sum_to_one(self) -> Self:
        total = self.p_random_state_as_goal + self.p_future_in_traj + self.p_uniform_random
        if abs(total - 1.0) > 1e-9:  # noqa: PLR2004
            msg = f"goal-label probabilities must sum to 1, got {total!r}"
            raise ValueError(msg)
        return self

    @property
    def probabilities(self) -> np.ndarray:
        return np.array(
            [self.p_random_state_as_goal, self.p_future_in_traj, self.p_uniform_random]
        )


@dataclass(frozen=True, eq=False)
class TransitionSet:
    """Column-wise transitions. All arrays share the leading dimension."""

    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    g: np.ndarray
    success: np.ndarray
    terminal: np.ndarray
    source: np.ndarray
    traj_id: np.ndarray
    t: np.ndarray
    # Synthetic provenance: index of the real start transition and the latent
    # step (1..k) that produced this transition. -1 and 0 for real data.
    origin: np.ndarray
    rollout_step: np.ndarray

    COLUMNS = (
        "s", "a", "s_next", "g", "success", "terminal",
        "source", "traj_id", "t", "origin", "rollout_step",
    )  # fmt: skip

    def __len__(self) -> int:
        return len(self.s)

    @classmethod
    def empty(cls) -> TransitionSet:
        return cls(
            s=np.empty((0, STATE_DIM)),
            a=np.empty((0, ACTION_DIM)),
            s_next=np.empty((0, STATE_DIM)),
            g=np.empty((0, STATE_DIM)),
            success=np.empty(0),
            terminal=np.empty(0),
            source=np.empty(0, dtype=np.uint8),
            traj_id=np.empty(0, dtype=np.int64),
            t=np.empty(0, dtype=np.int64),
            origin=np.empty(0, dtype=np.int64),
            rollout_step=np.empty(0, dtype=np.int64),
        )

    def columns(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.COLUMNS}

    def take(self, index: np.ndarray) -> TransitionSet:
        return TransitionSet(**{k: v[index] for k, v in self.columns().items()})

    @classmethod
    def concat(cls, parts: list[TransitionSet]) -> TransitionSet:
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty()
        return cls(
            **{k: np.concatenate([p.columns()[k] for p in parts]) for k in cls.COLUMNS}
        )

    def with_goals(self, env: MazeEnv, g: np.ndarray) -> TransitionSet:
        """Replace goals and recompute both goal flags."""
        return dataclasses.replace(
            self,
            g=g,
            success=env.goal_rewards(self.s, g),
            terminal=env.goal_rewards(self.s_next, g),
        )

    def terminals_consistent(self, env: MazeEnv) -> bool:
        return bool(np.array_equal(self.terminal, env.goal_rewards(self.s_next, self.g)))


def sample_goal_branches(
    n: int, cfg: GoalLabelConfig, rng: np.random.Generator
) -> np.ndarray:
    """Draw ``n`` branch ids (current, future, uniform) from ``cfg``."""
    return rng.choice(3, size=n, p=cfg.probabilities)


def trajectory_transitions(trajectories: list[Trajectory]) -> TransitionSet:
    """Unlabeled transitions ``(s_t, a_t, s_{t+1})``; goals are left as ``s_t``."""
    if not trajectories:
        raise EmptyDatasetError("no trajectories to build transitions from")
    s, a, s_next, traj_id, t = [], [], [], [], []
    for i, traj in enumerate(trajectories):
        n = len(traj) - 1
        s.append(traj.states[:-1])
        a.append(traj.actions)
        s_next.append(traj.states[1:])
        traj_id.append(np.full(n, i, dtype=np.int64))
        t.append(np.arange(n, dtype=np.int64))
    count = sum(len(x) for x in s)
    states = np.concatenate(s)
    return TransitionSet(
        s=states,
        a=np.concatenate(a),
        s_next=np.concatenate(s_next),
        g=states.copy(),
        success=np.ones(count),
        terminal=np.zeros(count),
        source=np.full(count, REAL, dtype=np.uint8),
        traj_id=np.concatenate(traj_id),
        t=np.concatenate(t),
        origin=np.full(count, -1, dtype=np.int64),
        rollout_step=np.zeros(count, dtype=np.int64),
    )


def label_goals(
    trajectories: list[Trajectory],
    cfg: GoalLabelConfig,
    seed: int,
    *,
    env: MazeEnv,
) -> TransitionSet:
    """Attach one hindsight goal to every transition of ``trajectories``.

    Future goals sit ``k ~ Geometric(1 - gamma)`` steps ahead (``k >= 1``),
    clipped to the trajectory's last state. Goals are frozen afterwards.
    """
    base = trajectory_transitions(trajectories)
    rng = np.random.default_rng(seed)
    n = len(base)
    branches = sample_goal_branches(n, cfg, rng)
    offsets = rng.geometric(1.0 - cfg.gamma, size=n)
    all_states = np.concatenate([traj.states for traj in trajectories])
    uniform = rng.integers(len(all_states), size=n)

    lengths = np.array([len(traj) for traj in trajectories])
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    future_t = np.minimum(base.t + offsets, lengths[base.traj_id] - 1)
    future = all_states[starts[base.traj_id] + future_t]

    g = np.where(
        (branches == BRANCH_CURRENT)[:, None],
        base.s,
        np.where((branches == BRANCH_FUTURE)[:, None], future, all_states[uniform]),
    )
    labeled = base.with_goals(env, g)
    logger.debug(
        "labeled %d transitions (%.1f%% terminal)", n, 100.0 * labeled.terminal.mean()
    )
    return labeled


class TransitionStore:
    """Append-only transition buffer with an optional FIFO capacity."""

    def __init__(self, capacity: int | None = None) -> None:
        if capacity is not None and capacity < 1:
            msg = f"capacity must be >= 1, got {capacity}"
            raise ValueError(msg)
        self.capacity = capacity
        self._data = TransitionSet.empty()
        self.evicted = 0

    def __len__(self) -> int:
        return len(self._data)

    def append(self, batch: TransitionSet) -> None:
        data = TransitionSet.concat([self._data, batch])
        if self.capacity is not None and len(data) > self.capacity:
            drop = len(data) - self.capacity
            self.evicted += drop
            data = data.take(np.arange(drop, len(data)))
        self._data = data

    def snapshot(self) -> TransitionSet:
        """The current contents; later appends do not affect it."""
        return self._data


def _draw(n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    return rng.choice(size, size=n, replace=n > size)


def sample_batch(
    D: TransitionSet,
    D_hat: TransitionStore | TransitionSet | None,
    B: int,
    sigma: float,
    seed: int | np.random.Generator,
) -> TransitionSet:
    """Exactly ``round(sigma * B)`` synthetic and ``B - round(sigma * B)`` real rows.

    Sampling within each store is uniform, without replacement when the store
    is large enough. No random numbers are drawn for an empty share, so a
    ``sigma = 0`` run consumes the generator exactly like a run with no
    synthetic buffer at all.
    """
    if not 0.0 <= sigma <= 1.0:
        msg = f"sigma must lie in [0, 1], got {sigma}"
        raise ValueError(msg)
    rng = np.random.default_rng(seed)
    n_syn = round(sigma * B)
    n_real = B - n_syn
    if n_real > len(D):
        msg = f"cannot draw {n_real} real transitions from a dataset of {len(D)}"
        raise ValueError(msg)
    synthetic = D_hat.snapshot() if isinstance(D_hat, TransitionStore) else D_hat
    if n_syn > 0 and (synthetic is None or len(synthetic) == 0):
        msg = f"sigma={sigma} requests {n_syn} synthetic transitions but the rollout buffer is empty"
        raise EmptySyntheticBufferError(msg)
    parts = []
    if n_real:
        parts.append(D.take(_draw(n_real, len(D), rng)))
    if n_syn:
        assert synthetic is not None
        parts.append(synthetic.take(_draw(n_syn, len(synthetic), rng)))
    return TransitionSet.concat(parts)


def ensure_terminal(
    batch: TransitionSet, D: TransitionSet, rng: np.random.Generator
) -> TransitionSet:
    """Swap one row of ``batch`` for a terminal transition of ``D`` if it has none."""
    if len(batch) == 0 or batch.terminal.any():
        return batch
    candidates = np.flatnonzero(D.terminal)
    if len(candidates) == 0:
        return batch
    pick = D.take(np.array([candidates[int(rng.integers(len(candidates)))]]))
    keep = batch.take(np.arange(1, len(batch)))
    return TransitionSet.concat([pick, keep])


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def trajectories_to_rows(trajectories: list[Trajectory]) -> np.ndarray:
    """Rows ``(traj_id, t, s0, s1, a0, a1)``; the final state has NaN actions."""
    rows = []
    for i, traj in enumerate(trajectories):
        h = len(traj)
        actions = np.vstack([traj.actions, np.full((1, ACTION_DIM), np.nan)])
        rows.append(
            np.column_stack([np.full(h, i), np.arange(h), traj.states, actions])
        )
    return np.vstack(rows)


def rows_to_trajectories(rows: np.ndarray) -> list[Trajectory]:
    trajectories = []
    for i in np.unique(rows[:, 0]).astype(int):
        block = rows[rows[:, 0] == i]
        block = block[np.argsort(block[:, 1])]
        trajectories.append(Trajectory(block[:, 2:4].copy(), block[:-1, 4:6].copy()))
    return trajectories


DATASET_CSV_HEADER = "traj_id,t,s0,s1,a0,a1"
TRANSITION_CSV_HEADER = (
    "traj_id,t,s0,s1,a0,a1,s_next0,s_next1,g0,g1,success,terminal,source,origin,rollout_step"
)


def write_trajectories_csv(path: str | Path, trajectories: list[Trajectory]) -> None:
    np.savetxt(
        path,
        trajectories_to_rows(trajectories),
        delimiter=",",
        header=DATASET_CSV_HEADER,
        comments="",
        fmt="%.17g",
    )


def read_trajectories_csv(path: str | Path) -> list[Trajectory]:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if rows.size == 0:
        msg = f"{path} holds no trajectory rows"
        raise EmptyDatasetError(msg)
    return rows_to_trajectories(rows)


def write_transitions_csv(path: str | Path, data: TransitionSet) -> None:
    table = np.column_stack(
        [
            data.traj_id, data.t, data.s, data.a, data.s_next, data.g,
            data.success, data.terminal, data.source, data.origin, data.rollout_step,
        ]
    )  # fmt: skip
    np.savetxt(
        path, table, delimiter=",", header=TRANSITION_CSV_HEADER, comments="", fmt="%.17g"
    )


def read_transitions_csv(path: str | Path) -> TransitionSet:
    """Inverse of :func:`write_transitions_csv`."""
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if rows.size == 0:
        msg = f"{path} holds no transition rows"
        raise EmptyDatasetError(msg)

    def pair(first: int) -> np.ndarray:
        return np.ascontiguousarray(rows[:, first : first + 2])

    return TransitionSet(
        s=pair(2),
        a=pair(4),
        s_next=pair(6),
        g=pair(8),
        success=rows[:, 10].copy(),
        terminal=rows[:, 11].copy(),
        source=rows[:, 12].astype(np.uint8),
        traj_id=rows[:, 0].astype(np.int64),
        t=rows[:, 1].astype(np.int64),
        origin=rows[:, 13].astype(np.int64),
        rollout_step=rows[:, 14].astype(np.int64),
    )


def save_dataset(
    path: str | Path,
    trajectories: list[Trajectory],
    labeled: TransitionSet,
    meta: dict[str, Any],
) -> str:
    """Write raw trajectory rows and labeled transitions into one container."""
    arrays = {"trajectories": trajectories_to_rows(trajectories)}
    arrays.update({f"labeled.{k}": v for k, v in labeled.columns().items()})
    return write_container(path, arrays, {**meta, "kind": "dataset"})


def load_dataset(path: str | Path) -> tuple[list[Trajectory], TransitionSet, dict[str, Any]]:
    container = read_container(path, kind="dataset")
    trajectories = rows_to_trajectories(container.arrays["trajectories"])
    labeled = TransitionSet(
        **{k: container.arrays[f"labeled.{k}"] for k in TransitionSet.COLUMNS}
    )
    if len(labeled) == 0:
        msg = f"{path} holds an empty dataset"
        raise EmptyDatasetError(msg)
    return trajectories, labeled, container.meta


def save_transitions(path: str | Path, data: TransitionSet, meta: dict[str, Any]) -> str:
    return write_container(
        path, dict(data.columns()), {**meta, "kind": "transitions"}
    )


def load_transitions(path: str | Path) -> TransitionSet:
    container = read_container(path, kind="transitions")
    return TransitionSet(**{k: container.arrays[k] for k in TransitionSet.COLUMNS})
