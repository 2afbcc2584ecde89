"""Deterministic goal-reaching mazes and the behavior policies that fill datasets.

A maze is a plain-text layout (``#`` wall, ``.`` free, ``S`` start candidate,
``G`` goal candidate) read into an immutable :class:`Layout`. Two environment
variants share it:

* :class:`GridMaze` — states are integer cell coordinates, actions are snapped
  to one of the five moves ``N/S/E/W/stay``.
* :class:`PointMaze` — states are real coordinates (cell ``(i, j)`` is centred
  on ``(i, j)``), and an action in ``[-1, 1]^2`` moves the point by
  ``step_size * a``.

Both represent actions as 2-vectors so every learned network sees the same
action space. Blocked moves return the current state. Environments are frozen
after construction, so ``step`` is pure and safe to call from several workers.
"""

from __future__ import annotations

import hashlib
import logging
from collections import deque
from dataclasses import dataclass, field
from functools import cache
from importlib import resources
from pathlib import Path
from typing import ClassVar, Literal, Protocol

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from tempdata.core.errors import InvalidStateError, MazeLayoutError, UnreachableError

logger = logging.getLogger(__name__)

Cell = tuple[int, int]

STATE_DIM = 2
ACTION_DIM = 2

# (dx, dy) per discrete move; y grows downward like the rows of a layout file.
MOVES: dict[str, Cell] = {
    "N": (0, -1),
    "S": (0, 1),
    "E": (1, 0),
    "W": (-1, 0),
    "stay": (0, 0),
}
ACTION_VECTORS = np.array(list(MOVES.values()), dtype=np.float64)

BUILTIN_LAYOUTS = ("open5", "umaze", "maze7", "maze11")


@dataclass(frozen=True)
class Layout:
    """A parsed maze layout. Cells outside the bounding box count as walls."""

    width: int
    height: int
    walls: frozenset[Cell]
    starts: tuple[Cell, ...]
    goals: tuple[Cell, ...]

    def is_free(self, cell: Cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height and cell not in self.walls

    def free_cells(self) -> list[Cell]:
        """Free cells in row-major order (``y`` then ``x``)."""
        return [
            (x, y)
            for y in range(self.height)
            for x in range(self.width)
            if (x, y) not in self.walls
        ]

    def render(self) -> str:
        rows = []
        for y in range(self.height):
            row = []
            for x in range(self.width):
                cell = (x, y)
                if cell in self.walls:
                    row.append("#")
                elif cell in self.starts:
                    row.append("S")
                elif cell in self.goals:
                    row.append("G")
                else:
                    row.append(".")
            rows.append("".join(row))
        return "\n".join(rows) + "\n"


def parse_layout(text: str) -> Layout:
    """Parse a layout from its text form.

    Blank lines are ignored. Every row must have the same width. A layout with
    no ``S`` cell uses every free cell as a start candidate.
    """
    rows = [line.rstrip("\r") for line in text.splitlines() if line.strip()]
    if not rows:
        raise MazeLayoutError("layout is empty")
    width = len(rows[0])
    walls: set[Cell] = set()
    starts: list[Cell] = []
    goals: list[Cell] = []
    for y, row in enumerate(rows):
        if len(row) != width:
            msg = f"row {y} has width {len(row)}, expected {width}"
            raise MazeLayoutError(msg)
        for x, char in enumerate(row):
            if char == "#":
                walls.add((x, y))
            elif char == "S":
                starts.append((x, y))
            elif char == "G":
                goals.append((x, y))
            elif char != ".":
                msg = f"unexpected character {char!r} at ({x}, {y})"
                raise MazeLayoutError(msg)
    layout = Layout(
        width=width,
        height=len(rows),
        walls=frozenset(walls),
        starts=tuple(starts),
        goals=tuple(goals),
    )
    if not layout.free_cells():
        raise MazeLayoutError("layout has no free cells")
    if not layout.starts:
        layout = Layout(
            width=layout.width,
            height=layout.height,
            walls=layout.walls,
            starts=tuple(layout.free_cells()),
            goals=layout.goals,
        )
    return layout


def load_layout(name_or_path: str | Path) -> Layout:
    """Load a built-in layout by name or a layout file by path."""
    if str(name_or_path) in BUILTIN_LAYOUTS:
        text = (
            resources.files("tempdata.mazes")
            .joinpath(f"{name_or_path}.txt")
            .read_text()
        )
        return parse_layout(text)
    path = Path(name_or_path)
    if not path.is_file():
        msg = (
            f"maze layout {str(name_or_path)!r} is neither a file nor a built-in "
            f"layout ({', '.join(BUILTIN_LAYOUTS)})"
        )
        raise MazeLayoutError(msg)
    return parse_layout(path.read_text())


def layout_hash(layout: Layout) -> str:
    """SHA-256 of the canonical rendering of ``layout``."""
    return hashlib.sha256(layout.render().encode()).hexdigest()


@cache
def _bfs(layout: Layout, source: Cell) -> dict[Cell, int]:
    # Moves are reversible, so distances from ``source`` are distances to it.
    dist = {source: 0}
    frontier = deque([source])
    while frontier:
        cell = frontier.popleft()
        for dx, dy in MOVES.values():
            if dx == dy == 0:
                continue
            nxt = (cell[0] + dx, cell[1] + dy)
            if nxt not in dist and layout.is_free(nxt):
                dist[nxt] = dist[cell] + 1
                frontier.append(nxt)
    return dist


@dataclass(frozen=True)
class MazeEnv:
    """Base class for the two maze variants."""

    layout: Layout
    start_weights: tuple[float, ...] | None = None

    variant: ClassVar[str] = "base"

    def __post_init__(self) -> None:
        if self.start_weights is not None and len(self.start_weights) != len(
            self.layout.starts
        ):
            msg = "start_weights must have one entry per start cell"
            raise MazeLayoutError(msg)
        for goal in self.layout.goals:
            reachable = _bfs(self.layout, goal)
            for start in self.layout.starts:
                if start not in reachable:
                    msg = f"goal {goal} is unreachable from start {start}"
                    raise UnreachableError(msg)

    @property
    def width(self) -> int:
        return self.layout.width

    @property
    def height(self) -> int:
        return self.layout.height

    @property
    def walls(self) -> frozenset[Cell]:
        return self.layout.walls

    def free_cells(self) -> list[Cell]:
        return self.layout.free_cells()

    def cell_of(self, s: np.ndarray) -> Cell:
        x, y = np.floor(np.asarray(s, dtype=np.float64) + 0.5).astype(int)
        return int(x), int(y)

    def in_wall(self, states: np.ndarray) -> np.ndarray:
        """Vectorized wall test; out-of-bounds and non-finite states count as walls."""
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        finite = np.all(np.isfinite(states), axis=1)
        cells = np.floor(np.where(np.isfinite(states), states, 0.0) + 0.5).astype(int)
        blocked = ~finite
        for i, (x, y) in enumerate(cells):
            if not blocked[i]:
                blocked[i] = not self.layout.is_free((int(x), int(y)))
        return blocked

    def validate(self, s: np.ndarray) -> np.ndarray:
        """Return ``s`` as a float vector, or raise :class:`InvalidStateError`."""
        s = np.asarray(s, dtype=np.float64)
        if s.shape != (STATE_DIM,) or not np.all(np.isfinite(s)):
            msg = f"state {s!r} is not a finite {STATE_DIM}-vector"
            raise InvalidStateError(msg)
        low, high = -0.5, np.array([self.width, self.height]) - 0.5
        if np.any(s < low) or np.any(s > high):
            msg = f"state {s.tolist()} is outside the maze bounding box"
            raise InvalidStateError(msg)
        if not self.layout.is_free(self.cell_of(s)):
            msg = f"state {s.tolist()} is inside a wall cell"
            raise InvalidStateError(msg)
        return s

    def bfs_from(self, cell: Cell) -> dict[Cell, int]:
        """Shortest step counts from ``cell`` to every reachable free cell."""
        return _bfs(self.layout, cell)

    def next_hop(self, cell: Cell, target: Cell) -> Cell:
        """The neighbour of ``cell`` one step closer to ``target``."""
        dist = _bfs(self.layout, target)
        if cell not in dist:
            msg = f"{target} is unreachable from {cell}"
            raise UnreachableError(msg)
        if cell == target:
            return cell
        for dx, dy in MOVES.values():
            nxt = (cell[0] + dx, cell[1] + dy)
            if dist.get(nxt) == dist[cell] - 1:
                return nxt
        raise AssertionError("BFS tree has no predecessor")  # pragma: no cover

    def is_connected(self) -> bool:
        free = self.free_cells()
        return len(_bfs(self.layout, free[0])) == len(free)

    def sample_start(self, rng: np.random.Generator) -> np.ndarray:
        starts = self.layout.starts
        if self.start_weights is None:
            index = int(rng.integers(len(starts)))
        else:
            p = np.asarray(self.start_weights, dtype=np.float64)
            index = int(rng.choice(len(starts), p=p / p.sum()))
        return np.array(starts[index], dtype=np.float64)

    def cell_state(self, cell: Cell) -> np.ndarray:
        return np.array(cell, dtype=np.float64)

    def random_action(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def step(self, s: np.ndarray, a: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def goal_reward(self, s: np.ndarray, g: np.ndarray) -> float:
        raise NotImplementedError

    def goal_rewards(self, s: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Row-wise :meth:`goal_reward` for ``(N, 2)`` arrays."""
        raise NotImplementedError

    def action_toward(self, s: np.ndarray, cell: Cell) -> np.ndarray:
        raise NotImplementedError

    def candidate_actions(self) -> np.ndarray:
        """The discrete action set used by planners and greedy agents."""
        return ACTION_VECTORS


def snap_action(a: np.ndarray) -> Cell:
    """Snap a real 2-vector to the discrete move it points along."""
    a = np.clip(np.asarray(a, dtype=np.float64), -1.0, 1.0)
    if not np.all(np.isfinite(a)) or np.max(np.abs(a)) < 0.5:  # noqa: PLR2004
        return (0, 0)
    if abs(a[0]) >= abs(a[1]):
        return (int(np.sign(a[0])), 0)
    return (0, int(np.sign(a[1])))


@dataclass(frozen=True)
class GridMaze(MazeEnv):
    """Gridworld variant: integer states, five discrete moves."""

    variant: ClassVar[str] = "grid"

    def step(self, s: np.ndarray, a: np.ndarray) -> np.ndarray:
        s = self.validate(s)
        x, y = self.cell_of(s)
        dx, dy = snap_action(a)
        candidate = (x + dx, y + dy)
        if not self.layout.is_free(candidate):
            return s.copy()
        return np.array(candidate, dtype=np.float64)

    def goal_reward(self, s: np.ndarray, g: np.ndarray) -> float:
        return 1.0 if self.cell_of(s) == self.cell_of(g) else 0.0

    def goal_rewards(self, s: np.ndarray, g: np.ndarray) -> np.ndarray:
        cs = np.floor(np.asarray(s, dtype=np.float64) + 0.5)
        cg = np.floor(np.asarray(g, dtype=np.float64) + 0.5)
        return np.all(cs == cg, axis=-1).astype(np.float64)

    def random_action(self, rng: np.random.Generator) -> np.ndarray:
        return ACTION_VECTORS[int(rng.integers(len(ACTION_VECTORS)))].copy()

    def action_toward(self, s: np.ndarray, cell: Cell) -> np.ndarray:
        x, y = self.cell_of(s)
        return np.clip(
            np.array([cell[0] - x, cell[1] - y], dtype=np.float64), -1.0, 1.0
        )


@dataclass(frozen=True)
class PointMaze(MazeEnv):
    """Continuous point-mass variant with kinematics ``s' = clip(s + step * a)``."""

    step_size: float = 0.2
    goal_radius: float = 0.5

    variant: ClassVar[str] = "point"

    def step(self, s: np.ndarray, a: np.ndarray) -> np.ndarray:
        s = self.validate(s)
        a = np.clip(np.asarray(a, dtype=np.float64), -1.0, 1.0)
        if not np.all(np.isfinite(a)):
            return s.copy()
        # Keep the upper edge strictly inside the last cell.
        high = np.array([self.width, self.height], dtype=np.float64) - 0.5 - 1e-9
        candidate = np.clip(s + self.step_size * a, -0.5, high)
        if not self.layout.is_free(self.cell_of(candidate)):
            return s.copy()
        return candidate

    def goal_reward(self, s: np.ndarray, g: np.ndarray) -> float:
        gap = np.asarray(s, dtype=np.float64) - np.asarray(g, dtype=np.float64)
        return 1.0 if float(np.linalg.norm(gap)) <= self.goal_radius else 0.0

    def goal_rewards(self, s: np.ndarray, g: np.ndarray) -> np.ndarray:
        gap = np.asarray(s, dtype=np.float64) - np.asarray(g, dtype=np.float64)
        return (np.linalg.norm(gap, axis=-1) <= self.goal_radius).astype(np.float64)

    def random_action(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-1.0, 1.0, size=ACTION_DIM)

    def action_toward(self, s: np.ndarray, cell: Cell) -> np.ndarray:
        target = np.array(cell, dtype=np.float64)
        return np.clip((target - np.asarray(s)) / self.step_size, -1.0, 1.0)


class MazeConfig(BaseModel):
    """Which maze to build and, for the point variant, its kinematics."""

    model_config = ConfigDict(extra="forbid")

    layout: str = Field(
        default="maze7",
        description="Built-in layout name or path to a layout text file.",
    )
    variant: Literal["grid", "point"] = "grid"
    step_size: float = Field(default=0.2, gt=0, le=1)
    goal_radius: float = Field(default=0.5, gt=0)


def make_env(cfg: MazeConfig) -> MazeEnv:
    layout = load_layout(cfg.layout)
    if cfg.variant == "point":
        return PointMaze(layout, step_size=cfg.step_size, goal_radius=cfg.goal_radius)
    return GridMaze(layout)


# ---------------------------------------------------------------------------
# Behavior policies
# ---------------------------------------------------------------------------


class BehaviorPolicy(Protocol):
    """A data-collection policy. ``reset`` is called once per trajectory."""

    def reset(self, env: MazeEnv, state: np.ndarray, rng: np.random.Generator) -> None: ...

    def act(
        self, env: MazeEnv, state: np.ndarray, t: int, rng: np.random.Generator
    ) -> np.ndarray: ...

    def milestones(self) -> tuple[int, ...]: ...


class UniformRandomPolicy:
    """Uniformly random actions over the variant's action space."""

    def reset(self, env: MazeEnv, state: np.ndarray, rng: np.random.Generator) -> None:
        return None

    def act(
        self, env: MazeEnv, state: np.ndarray, t: int, rng: np.random.Generator
    ) -> np.ndarray:
        return env.random_action(rng)

    def milestones(self) -> tuple[int, ...]:
        return ()


@dataclass
class PlannerPolicy:
    """Epsilon-greedy BFS planner toward random waypoints ("play"-style data).

    The planner walks the BFS shortest path toward a waypoint drawn uniformly
    from the free cells; on arrival it draws the next one. ``milestones``
    reports the time steps at which a waypoint was reached (step 0 is the
    first segment's start).
    """

    epsilon: float = 0.2
    _waypoint: Cell | None = field(default=None, init=False, repr=False)
    _arrivals: list[int] = field(default_factory=list, init=False, repr=False)

    def _pick_waypoint(
        self, env: MazeEnv, current: Cell, rng: np.random.Generator
    ) -> Cell:
        choices = [cell for cell in env.free_cells() if cell != current]
        if not choices:
            return current
        return choices[int(rng.integers(len(choices)))]

    def reset(self, env: MazeEnv, state: np.ndarray, rng: np.random.Generator) -> None:
        if not env.is_connected():
            msg = "planner policy needs a connected maze; some waypoints are unreachable"
            raise UnreachableError(msg)
        current = env.cell_of(state)
        self._waypoint = self._pick_waypoint(env, current, rng)
        self._arrivals = [0]

    def act(
        self, env: MazeEnv, state: np.ndarray, t: int, rng: np.random.Generator
    ) -> np.ndarray:
        current = env.cell_of(state)
        if self._waypoint is None:
            self.reset(env, state, rng)
        elif current == self._waypoint:
            if t > 0:
                self._arrivals.append(t)
            self._waypoint = self._pick_waypoint(env, current, rng)
        if self.epsilon > 0 and rng.random() < self.epsilon:
            return env.random_action(rng)
        assert self._waypoint is not None
        return env.action_toward(state, env.next_hop(current, self._waypoint))

    def milestones(self) -> tuple[int, ...]:
        return tuple(self._arrivals)


class DataConfig(BaseModel):
    """Offline dataset size and the behavior policy that collects it."""

    model_config = ConfigDict(extra="forbid")

    n_traj: int = Field(default=200, ge=1)
    horizon: int = Field(default=100, ge=2)
    behavior: Literal["planner", "random"] = "planner"
    epsilon: float = Field(default=0.2, ge=0, le=1)


def make_behavior_policy(cfg: DataConfig) -> BehaviorPolicy:
    if cfg.behavior == "random":
        return UniformRandomPolicy()
    return PlannerPolicy(epsilon=cfg.epsilon)


@dataclass(frozen=True)
class Trajectory:
    """``horizon`` states and the ``horizon - 1`` actions between them."""

    states: np.ndarray
    actions: np.ndarray
    milestones: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.states)


def generate_dataset(
    env: MazeEnv,
    policy: BehaviorPolicy,
    n_traj: int,
    horizon: int,
    seed: int,
) -> list[Trajectory]:
    """Roll out ``policy`` for ``n_traj`` trajectories of exactly ``horizon`` states.

    Each trajectory draws from its own generator spawned from ``seed``, so the
    result is bit-identical across runs and independent of generation order.
    """
    if n_traj < 1:
        msg = f"n_traj must be >= 1, got {n_traj}"
        raise ValueError(msg)
    if horizon < 2:  # noqa: PLR2004
        msg = f"horizon must be >= 2, got {horizon}"
        raise ValueError(msg)
    trajectories = []
    for child in np.random.SeedSequence(seed).spawn(n_traj):
        rng = np.random.default_rng(child)
        state = env.sample_start(rng)
        policy.reset(env, state, rng)
        states = np.empty((horizon, STATE_DIM))
        actions = np.empty((horizon - 1, ACTION_DIM))
        states[0] = state
        for t in range(horizon - 1):
            action = np.asarray(policy.act(env, state, t, rng), dtype=np.float64)
            state = env.step(state, action)
            actions[t] = action
            states[t + 1] = state
        trajectories.append(Trajectory(states, actions, policy.milestones()))
    logger.debug("generated %d trajectories of %d states", n_traj, horizon)
    return trajectories
