"""Exact reference answers: BFS distances, tabular value iteration, expectiles.

Value iteration uses reward ``-1`` per step and an absorbing goal, so its
fixed point is ``V*(s) = -(1 - gamma^n(s)) / (1 - gamma)`` with ``n`` the BFS
step count: the quantity the learned latent distance is trained toward.
"""

from __future__ import annotations

import itertools
import logging
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from tempdata.core.errors import InvalidStateError, NoConvergenceError, UnreachableError
from tempdata.core.losses import fit_expectile
from tempdata.core.maze import BUILTIN_LAYOUTS, MOVES, Cell, GridMaze, MazeEnv, load_layout

logger = logging.getLogger(__name__)


def _require_free(env: MazeEnv, cell: Cell) -> None:
    if not env.layout.is_free(cell):
        msg = f"{cell} is a wall or outside the maze"
        raise InvalidStateError(msg)


def bfs_distance(env: MazeEnv, s: Cell, g: Cell) -> int:
    """Minimal number of moves from cell ``s`` to cell ``g``."""
    _require_free(env, s)
    _require_free(env, g)
    dist = env.bfs_from(g)
    if s not in dist:
        msg = f"{g} is unreachable from {s}"
        raise UnreachableError(msg)
    return dist[s]


def discounted_cost(n: int | np.ndarray, gamma: float) -> np.ndarray:
    """``(1 - gamma^n) / (1 - gamma)``: the discounted cost of an ``n``-step path."""
    return (1.0 - np.power(gamma, n)) / (1.0 - gamma)


@dataclass(frozen=True)
class TabularValues:
    values: dict[Cell, float]
    goal: Cell
    gamma: float
    iterations: int

    def __getitem__(self, cell: Cell) -> float:
        return self.values[cell]


def value_iteration(
    env: MazeEnv,
    g: Cell,
    gamma: float,
    tol: float = 1e-10,
    max_iter: int = 100_000,
) -> TabularValues:
    """Bellman optimality iteration over free cells with the goal absorbing."""
    if tol <= 0:
        msg = f"tol must be > 0, got {tol}"
        raise ValueError(msg)
    _require_free(env, g)
    cells = env.free_cells()
    index = {cell: i for i, cell in enumerate(cells)}
    # successors[i, m] = index of the cell reached from cells[i] by move m.
    successors = np.array(
        [
            [
                index.get((x + dx, y + dy), i)
                for dx, dy in MOVES.values()
            ]
            for i, (x, y) in enumerate(cells)
        ]
    )
    goal = index[g]
    v = np.zeros(len(cells))
    for iteration in range(1, max_iter + 1):
        new = np.max(-1.0 + gamma * v[successors], axis=1)
        new[goal] = 0.0
        delta = float(np.max(np.abs(new - v)))
        v = new
        if delta < tol:
            return TabularValues(dict(zip(cells, v.tolist(), strict=True)), g, gamma, iteration)
    msg = f"value iteration did not converge within {max_iter} iterations (last delta {delta:.3g})"
    raise NoConvergenceError(msg)


def expectile_closed_form(samples: list[float] | np.ndarray, tau: float, tol: float = 1e-10) -> float:
    """Root of ``sum |tau - 1(x_i < m)| (x_i - m) = 0`` by bisection."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("expectile of an empty sample")
    if not 0.0 < tau < 1.0:
        msg = f"tau must lie in (0, 1), got {tau}"
        raise ValueError(msg)

    def score(m: float) -> float:
        return float(np.sum(np.where(x < m, 1.0 - tau, tau) * (x - m)))

    lo, hi = float(x.min()), float(x.max())
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        # score is decreasing in m.
        if score(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def oracle_table(env: MazeEnv, g: Cell, gamma: float) -> np.ndarray:
    """Rows ``(x, y, bfs_steps, v_star)`` over every cell reachable from ``g``."""
    values = value_iteration(env, g, gamma)
    dist = env.bfs_from(g)
    rows = [(x, y, dist[(x, y)], values[(x, y)]) for (x, y) in env.free_cells() if (x, y) in dist]
    return np.array(rows, dtype=np.float64)


def write_oracle_csv(path: str | Path, rows: np.ndarray) -> None:
    np.savetxt(
        path, rows, delimiter=",", header="x,y,bfs_steps,v_star", comments="", fmt=["%d", "%d", "%d", "%.12g"]
    )


def rank_agreement(heat_rows: np.ndarray, env: MazeEnv, goal: Cell) -> float:
    """Spearman correlation between learned distances and BFS distances to ``goal``."""
    dist = env.bfs_from(goal)
    bfs = np.array([dist[(int(x), int(y))] for x, y in heat_rows[:, :2]], dtype=np.float64)
    result = spearmanr(heat_rows[:, 2], bfs)
    return float(result.statistic)


@dataclass(frozen=True)
class OracleCheck:
    name: str
    ok: bool
    detail: str


def _check(name: str, fn: Callable[[], tuple[bool, str]]) -> OracleCheck:
    try:
        ok, detail = fn()
    except Exception as exc:  # noqa: BLE001 - a crashing check is a failed check
        return OracleCheck(name, False, f"{type(exc).__name__}: {exc}")
    return OracleCheck(name, ok, detail)


def _open_grid_bfs() -> tuple[bool, str]:
    env = GridMaze(load_layout("open5"))
    n = bfs_distance(env, (0, 0), (4, 4))
    return n == 8, f"(0,0)->(4,4) = {n}"  # noqa: PLR2004


def _wall_separates_neighbours() -> tuple[bool, str]:
    env = GridMaze(load_layout("umaze"))
    n = bfs_distance(env, (0, 0), (0, 2))
    return n > 2, f"(0,0)->(0,2) BFS {n} vs Euclidean 2"  # noqa: PLR2004


def _value_iteration_matches_bfs(gamma: float) -> tuple[bool, str]:
    worst = 0.0
    for name in BUILTIN_LAYOUTS:
        env = GridMaze(load_layout(name))
        for goal in env.layout.goals or env.free_cells()[:1]:
            rows = oracle_table(env, goal, gamma)
            expected = -discounted_cost(rows[:, 2], gamma)
            worst = max(worst, float(np.max(np.abs(rows[:, 3] - expected))))
    return worst < 1e-8, f"max |V* + (1-gamma^n)/(1-gamma)| = {worst:.2e}"  # noqa: PLR2004


def _bfs_triangle_inequality() -> tuple[bool, str]:
    checked = 0
    for name in ("open5", "umaze", "maze7"):
        env = GridMaze(load_layout(name))
        cells = env.free_cells()
        table = {c: env.bfs_from(c) for c in cells}
        for a, b, c in itertools.product(cells, repeat=3):
            if table[a][c] > table[a][b] + table[b][c]:
                return False, f"{name}: d{a, c} > d{a, b} + d{b, c}"
            checked += 1
    return True, f"{checked} triples"


def _expectile_mechanics() -> tuple[bool, str]:
    rng = np.random.default_rng(0)
    x = rng.normal(size=50)
    mean_gap = abs(expectile_closed_form(x, 0.5) - float(x.mean()))
    taus = (0.5, 0.7, 0.9, 0.95, 0.99)
    closed = [expectile_closed_form(x, tau) for tau in taus]
    fitted_gap = max(abs(fit_expectile(x, tau) - m) for tau, m in zip(taus, closed, strict=True))
    monotone = all(a <= b for a, b in itertools.pairwise(closed))
    ok = mean_gap < 1e-9 and fitted_gap < 1e-6 and monotone and closed[-1] <= x.max()  # noqa: PLR2004
    return ok, f"mean gap {mean_gap:.1e}, descent gap {fitted_gap:.1e}, monotone {monotone}"


def run_oracle_checks(gamma: float = 0.99) -> list[OracleCheck]:
    """Self-consistency checks of the oracles on the built-in mazes."""
    return [
        _check("bfs-open-grid", _open_grid_bfs),
        _check("bfs-exceeds-euclidean", _wall_separates_neighbours),
        _check("value-iteration-vs-bfs", lambda: _value_iteration_matches_bfs(gamma)),
        _check("bfs-triangle-inequality", _bfs_triangle_inequality),
        _check("expectile-mechanics", _expectile_mechanics),
    ]
