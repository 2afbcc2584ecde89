"""End-to-end orchestration: dataset generation, the three training phases, evaluation.

Phases run in order and hand over through checkpoints in a run directory::

    <run>/
      config.json            canonical config of the run
      repr.ckpt              encoder, decoder, target encoder
      dynamics.ckpt          latent forward model (+ state codec for the naive arm)
      policy.ckpt            actor (+ critic in actor-critic mode)
      repr_loss.csv          per-step losses of each phase
      dynamics_loss.csv
      policy_loss.csv
      dynamics_report.json   held-out NLL / MSE
      refreshes.jsonl        one line per rollout refresh
      synthetic.tdat         rollout buffer at the end of the policy phase
      synthetic.csv          the same transitions as CSV
      learning_curve.csv     success rate at every 10% of policy steps
      eval_report.json       written by ``tempdata eval``
      repr.json, ...         JSON exports of the checkpoints (``--export-json``)

Every checkpoint carries the config hash and seed in its header; a phase
refuses to start when a checkpoint it depends on is missing.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from tempdata.core.artifacts import export_json, file_sha256
from tempdata.core.augmentation import RefreshStats, RolloutBuffer, append_jsonl, refresh, refresh_steps
from tempdata.core.dataset import (
    TransitionSet,
    label_goals,
    load_dataset,
    sample_batch,
    save_dataset,
    save_transitions,
    write_transitions_csv,
)
from tempdata.core.dynamics import (
    Codec,
    LatentDynamics,
    NaiveStateCodec,
    evaluate_dynamics,
    load_dynamics,
    save_dynamics,
    train_dynamics,
)
from tempdata.core.errors import PhaseOrderError
from tempdata.core.manifest import DatasetManifest, manifest_path, write_manifest
from tempdata.core.maze import Cell, MazeEnv, generate_dataset, layout_hash, make_behavior_policy, make_env
from tempdata.core.oracle import rank_agreement
from tempdata.core.policy import (
    EvalResult,
    LatentGreedyAgent,
    OracleAgent,
    PolicyAgent,
    PolicyLearner,
    RandomAgent,
    evaluate,
    goal_key,
    load_policy,
    save_policy,
)
from tempdata.core.representation import (
    TemporalAutoencoder,
    corner_goals,
    heatmap,
    load_repr,
    progress_marks,
    save_repr,
    train_repr,
    write_heatmap_csv,
)
from tempdata.settings.base import TrainConfig, canonical_json, config_hash

logger = logging.getLogger(__name__)

Phase = Literal["all", "repr", "dynamics", "policy"]
AgentKind = Literal["policy", "oracle", "random", "greedy"]
Echo = Callable[[str], None]

_SEED_STREAMS = ("data", "label", "repr", "dynamics", "policy", "batches", "rollouts", "curve")


def seed_streams(seed: int) -> dict[str, int]:
    """Independent integer seeds for each consumer of randomness in a run."""
    states = np.random.SeedSequence(seed).generate_state(len(_SEED_STREAMS))
    return {name: int(value) for name, value in zip(_SEED_STREAMS, states, strict=True)}


def _quiet(_: str) -> None:
    return None


@dataclass(frozen=True)
class RunLayout:
    root: Path

    @property
    def config(self) -> Path:
        return self.root / "config.json"

    @property
    def repr_ckpt(self) -> Path:
        return self.root / "repr.ckpt"

    @property
    def dynamics_ckpt(self) -> Path:
        return self.root / "dynamics.ckpt"

    @property
    def policy_ckpt(self) -> Path:
        return self.root / "policy.ckpt"

    @property
    def refresh_log(self) -> Path:
        return self.root / "refreshes.jsonl"

    @property
    def synthetic_buffer(self) -> Path:
        return self.root / "synthetic.tdat"

    @property
    def synthetic_csv(self) -> Path:
        return self.root / "synthetic.csv"

    @property
    def learning_curve(self) -> Path:
        return self.root / "learning_curve.csv"

    @property
    def dynamics_report(self) -> Path:
        return self.root / "dynamics_report.json"

    @property
    def eval_report(self) -> Path:
        return self.root / "eval_report.json"

    def loss_csv(self, phase: str) -> Path:
        return self.root / f"{phase}_loss.csv"


def write_rows_csv(path: Path, rows: list[dict[str, float]]) -> None:
    if not rows:
        return
    header = list(rows[0])
    table = np.array([[row.get(k, np.nan) for k in header] for row in rows], dtype=np.float64)
    np.savetxt(path, table, delimiter=",", header=",".join(header), comments="", fmt="%.10g")


# ---------------------------------------------------------------------------
# gen-data
# ---------------------------------------------------------------------------


def gen_data(cfg: TrainConfig, out: Path, *, echo: Echo = _quiet) -> DatasetManifest:
    """Generate, label and store a dataset; write its manifest alongside."""
    env = make_env(cfg.maze)
    seeds = seed_streams(cfg.seed)
    echo(f"generating {cfg.data.n_traj} x {cfg.data.horizon} on {cfg.maze.layout} ({cfg.data.behavior})")
    trajectories = generate_dataset(
        env, make_behavior_policy(cfg.data), cfg.data.n_traj, cfg.data.horizon, seeds["data"]
    )
    labeled = label_goals(trajectories, cfg.goals, seeds["label"], env=env)
    digest = save_dataset(
        out, trajectories, labeled, {"config_hash": config_hash(cfg), "seed": cfg.seed}
    )
    manifest = DatasetManifest(
        seed=cfg.seed,
        config_hash=config_hash(cfg),
        maze=cfg.maze.layout,
        maze_hash=layout_hash(env.layout),
        variant=cfg.maze.variant,
        behavior=cfg.data.behavior,
        n_traj=cfg.data.n_traj,
        horizon=cfg.data.horizon,
        n_transitions=len(labeled),
        terminal_fraction=float(labeled.terminal.mean()),
        dataset_sha256=digest,
    )
    write_manifest(manifest_path(out), manifest)
    return manifest


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _meta(cfg: TrainConfig, dataset: Path) -> dict[str, object]:
    return {"config_hash": config_hash(cfg), "seed": cfg.seed, "dataset_sha256": file_sha256(dataset)}


def _require(path: Path, phase: str, needs: str) -> None:
    if not path.is_file():
        msg = f"{phase} phase needs the {needs} checkpoint at {path}; run the earlier phase first"
        raise PhaseOrderError(msg)


def evaluation_goals(env: MazeEnv) -> list[Cell]:
    return list(env.layout.goals) or corner_goals(env)


@dataclass
class PolicyPhaseResult:
    learner: PolicyLearner
    history: list[dict[str, float]]
    refreshes: list[RefreshStats]
    curve: list[dict[str, float]] = field(default_factory=list)
    synthetic: TransitionSet = field(default_factory=TransitionSet.empty)


def run_policy_phase(
    D: TransitionSet,
    ae: TemporalAutoencoder,
    dynamics: LatentDynamics,
    codec: Codec,
    cfg: TrainConfig,
    env: MazeEnv,
    *,
    sigma: float | None = None,
    on_refresh: Callable[[RefreshStats], None] | None = None,
) -> PolicyPhaseResult:
    """Policy extraction interleaved with scheduled rollout refreshes.

    Batches are all real until the buffer holds data; afterwards a share
    ``sigma`` of each batch is synthetic.
    """
    seeds = seed_streams(cfg.seed)
    learner = PolicyLearner(ae, cfg.policy, seeds["policy"], width_multiplier=cfg.width_multiplier)
    batch_rng = np.random.default_rng(seeds["batches"])
    rollout_rng = np.random.default_rng(seeds["rollouts"])
    buffer = RolloutBuffer.for_dataset(len(D), cfg.rollout)
    sigma = cfg.rollout.effective_sigma if sigma is None else sigma
    total = cfg.policy_steps
    schedule = set(refresh_steps(total, cfg.rollout))
    marks = progress_marks(total)
    goals = evaluation_goals(env)
    batch_size = min(cfg.policy.batch_size, len(D))

    def actor(s: np.ndarray, g: np.ndarray) -> np.ndarray:
        return learner.policy.act(ae, s, g)

    history: list[dict[str, float]] = []
    refreshes: list[RefreshStats] = []
    curve: list[dict[str, float]] = []
    for step in range(1, total + 1):
        if step in schedule:
            stats = refresh(
                buffer, D, actor, codec, dynamics, cfg.rollout,
                env=env, step=step, rng=rollout_rng, sample=cfg.dynamics.sample_rollouts,
            )  # fmt: skip
            refreshes.append(stats)
            if on_refresh is not None:
                on_refresh(stats)
        share = sigma if len(buffer) else 0.0
        batch = sample_batch(D, buffer, batch_size, share, batch_rng)
        row = {"step": float(step), **learner.update(batch)}
        history.append(row)
        if step in marks:
            result = evaluate(
                PolicyAgent(learner.policy, ae), env, goals,
                cfg.curve_episodes, cfg.eval_horizon, seeds["curve"],
            )  # fmt: skip
            curve.append({"step": float(step), "success": result.mean})
            logger.info(
                "policy step %d/%d: actor=%.4f success=%.3f buffer=%d",
                step, total, row["actor_loss"], result.mean, len(buffer),
            )  # fmt: skip
    return PolicyPhaseResult(learner, history, refreshes, curve, buffer.snapshot())


class TrainOutcome(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config_hash: str
    seed: int
    checkpoints: dict[str, str] = Field(description="Checkpoint name to SHA-256.")
    refreshes: int = 0
    synthetic_transitions: int = 0
    exports: list[str] = Field(default_factory=list, description="JSON checkpoint exports.")


def train(
    cfg: TrainConfig,
    dataset: Path,
    run: RunLayout,
    *,
    phase: Phase = "all",
    json_export: bool = False,
    echo: Echo = _quiet,
) -> TrainOutcome:
    """Run one phase or all three in order, writing checkpoints and metrics into ``run``.

    With ``json_export`` every checkpoint written is also exported as JSON next to it.
    """
    run.root.mkdir(parents=True, exist_ok=True)
    run.config.write_text(canonical_json(cfg) + "\n")
    _, D, _ = load_dataset(dataset)
    env = make_env(cfg.maze)
    seeds = seed_streams(cfg.seed)
    meta = _meta(cfg, dataset)
    outcome = TrainOutcome(config_hash=config_hash(cfg), seed=cfg.seed, checkpoints={})

    def checkpointed(name: str, path: Path, sha: str) -> None:
        outcome.checkpoints[name] = sha
        if json_export:
            outcome.exports.append(str(export_json(path)))

    if phase in ("all", "repr"):
        echo(f"repr phase: {cfg.repr_steps} steps on {len(D)} transitions")
        result = train_repr(
            D, cfg.representation, cfg.repr_steps, seeds["repr"], width_multiplier=cfg.width_multiplier
        )
        write_rows_csv(run.loss_csv("repr"), result.history)
        checkpointed("repr", run.repr_ckpt, save_repr(run.repr_ckpt, result, meta))

    if phase in ("all", "dynamics"):
        _require(run.repr_ckpt, "dynamics", "repr")
        ae, _ = load_repr(run.repr_ckpt)
        codec: Codec = ae
        if cfg.naive_state_dynamics:
            codec = NaiveStateCodec.fit(np.vstack([D.s, D.s_next]))
        arm = "naive-state" if cfg.naive_state_dynamics else "latent"
        echo(f"dynamics phase ({arm}): {cfg.dynamics_steps} steps")
        dyn = train_dynamics(
            D, codec, cfg.dynamics_steps, seeds["dynamics"],
            cfg=cfg.dynamics, width_multiplier=cfg.width_multiplier,
        )  # fmt: skip
        write_rows_csv(run.loss_csv("dynamics"), dyn.history)
        report = evaluate_dynamics(dyn.model, codec, D, dyn.holdout)
        run.dynamics_report.write_text(report.model_dump_json(indent=2) + "\n")
        sha = save_dynamics(run.dynamics_ckpt, dyn.model, meta, codec if cfg.naive_state_dynamics else None)
        checkpointed("dynamics", run.dynamics_ckpt, sha)

    if phase in ("all", "policy"):
        _require(run.repr_ckpt, "policy", "repr")
        _require(run.dynamics_ckpt, "policy", "dynamics")
        ae, _ = load_repr(run.repr_ckpt)
        model, naive = load_dynamics(run.dynamics_ckpt)
        rollouts = "off" if not cfg.rollout.enabled else f"sigma={cfg.rollout.sigma}"
        echo(f"policy phase: {cfg.policy_steps} steps, rollouts {rollouts}")
        for stale in (run.refresh_log, run.synthetic_buffer, run.synthetic_csv):
            stale.unlink(missing_ok=True)
        result = run_policy_phase(
            D, ae, model, naive if naive is not None else ae, cfg, env,
            on_refresh=lambda stats: append_jsonl(run.refresh_log, stats),
        )  # fmt: skip
        write_rows_csv(run.loss_csv("policy"), result.history)
        write_rows_csv(run.learning_curve, result.curve)
        if cfg.rollout.enabled:
            save_transitions(run.synthetic_buffer, result.synthetic, meta)
            write_transitions_csv(run.synthetic_csv, result.synthetic)
            outcome.synthetic_transitions = len(result.synthetic)
        sha = save_policy(run.policy_ckpt, result.learner.policy, meta, result.learner.critic)
        checkpointed("policy", run.policy_ckpt, sha)
        outcome.refreshes = len(result.refreshes)
    return outcome


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


class GoalStats(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mean: float
    std: float
    lower: float = Field(description="mean - 2 std")
    upper: float = Field(description="mean + 2 std")


def goal_stats(values: list[float]) -> GoalStats:
    mean = float(np.mean(values))
    std = float(np.std(values))
    return GoalStats(mean=mean, std=std, lower=mean - 2 * std, upper=mean + 2 * std)


class EvalReport(BaseModel):
    """Success rates over a seed sweep, reported as mean and a two-std band."""

    model_config = ConfigDict(extra="forbid")

    config_hash: str
    seed: int
    agent: AgentKind
    checkpoint_sha256: str | None = None
    goals: list[str]
    seeds: list[int]
    n_episodes: int
    horizon: int
    per_seed: list[EvalResult]
    per_goal: dict[str, GoalStats]
    aggregate: GoalStats


def build_agent(kind: AgentKind, run: RunLayout | None):
    if kind == "oracle":
        return OracleAgent(), None
    if kind == "random":
        return RandomAgent(), None
    if run is None:
        msg = f"the {kind} agent needs a run directory with checkpoints"
        raise PhaseOrderError(msg)
    _require(run.repr_ckpt, "eval", "repr")
    ae, _ = load_repr(run.repr_ckpt)
    if kind == "greedy":
        return LatentGreedyAgent(ae), file_sha256(run.repr_ckpt)
    _require(run.policy_ckpt, "eval", "policy")
    return PolicyAgent(load_policy(run.policy_ckpt), ae), file_sha256(run.policy_ckpt)


def evaluate_run(
    cfg: TrainConfig,
    run: RunLayout | None,
    *,
    goals: list[Cell] | None = None,
    agent_kind: AgentKind = "policy",
    echo: Echo = _quiet,
) -> EvalReport:
    env = make_env(cfg.maze)
    goals = goals or evaluation_goals(env)
    agent, digest = build_agent(agent_kind, run)
    results = []
    for seed in cfg.eval_seeds:
        echo(f"evaluating {agent_kind} agent, seed {seed}")
        results.append(evaluate(agent, env, goals, cfg.eval_episodes, cfg.eval_horizon, seed))
    keys = [goal_key(goal) for goal in goals]
    return EvalReport(
        config_hash=config_hash(cfg),
        seed=cfg.seed,
        agent=agent_kind,
        checkpoint_sha256=digest,
        goals=keys,
        seeds=list(cfg.eval_seeds),
        n_episodes=cfg.eval_episodes,
        horizon=cfg.eval_horizon,
        per_seed=results,
        per_goal={key: goal_stats([r.per_goal[key] for r in results]) for key in keys},
        aggregate=goal_stats([r.mean for r in results]),
    )


# ---------------------------------------------------------------------------
# heatmap
# ---------------------------------------------------------------------------


class HeatmapSummary(BaseModel):
    model_config = ConfigDict(extra="forbid")

    goal: str
    path: str
    n_cells: int
    rank_agreement: float = Field(description="Spearman correlation with BFS distances.")


def run_heatmap(
    repr_ckpt: Path,
    cfg: TrainConfig,
    goals: list[Cell],
    out: Path,
    *,
    echo: Echo = _quiet,
) -> list[HeatmapSummary]:
    """Write one ``(x, y, d)`` CSV per goal; ``out`` is a file for one goal, a directory otherwise."""
    ae, _ = load_repr(repr_ckpt)
    env = make_env(cfg.maze)
    if len(goals) > 1:
        out.mkdir(parents=True, exist_ok=True)
    summaries = []
    for goal in goals:
        rows = heatmap(ae, env, goal)
        path = out / f"heatmap_{goal[0]}_{goal[1]}.csv" if len(goals) > 1 else out
        write_heatmap_csv(path, rows)
        rho = rank_agreement(rows, env, goal)
        echo(f"goal {goal_key(goal)}: {len(rows)} cells, spearman {rho:.3f} -> {path}")
        summaries.append(
            HeatmapSummary(goal=goal_key(goal), path=str(path), n_cells=len(rows), rank_agreement=rho)
        )
    return summaries


def json_schema() -> dict:
    """Return the JSON Schema for ``eval_report.json``.

    The committed ``eval_report.schema.json`` is regenerated with
    ``python -m tempdata.core.pipeline > eval_report.schema.json``.
    """
    return EvalReport.model_json_schema()


if __name__ == "__main__":
    import json

    print(json.dumps(json_schema(), indent=2))  # noqa: T201
