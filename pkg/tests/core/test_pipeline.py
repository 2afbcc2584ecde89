from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from tempdata.core.artifacts import file_sha256, read_container
from tempdata.core.augmentation import RefreshStats
from tempdata.core.dataset import SYNTHETIC, load_dataset, load_transitions, read_transitions_csv
from tempdata.core.dynamics import load_dynamics
from tempdata.core.errors import PhaseOrderError
from tempdata.core.manifest import load_manifest, manifest_path
from tempdata.core.maze import make_env
from tempdata.core.pipeline import (
    EvalReport,
    RunLayout,
    evaluate_run,
    gen_data,
    goal_stats,
    json_schema,
    run_heatmap,
    run_policy_phase,
    seed_streams,
    train,
)
from tempdata.core.representation import corner_goals, load_repr
from tempdata.settings.base import TrainConfig, config_hash, load_config

REPO_ROOT = Path(__file__).resolve().parents[2]
SMOKE = REPO_ROOT / "configs" / "smoke.yaml"
PLAY = REPO_ROOT / "configs" / "maze11-play.yaml"


@pytest.fixture(scope="module")
def smoke_cfg() -> TrainConfig:
    return load_config(SMOKE)


@pytest.fixture(scope="module")
def dataset(smoke_cfg: TrainConfig, tmp_path_factory: pytest.TempPathFactory) -> Path:
    out = tmp_path_factory.mktemp("data") / "umaze.tdat"
    gen_data(smoke_cfg, out)
    return out


@pytest.fixture(scope="module")
def smoke_run(
    smoke_cfg: TrainConfig, dataset: Path, tmp_path_factory: pytest.TempPathFactory
) -> tuple[RunLayout, dict[str, str]]:
    run = RunLayout(tmp_path_factory.mktemp("run"))
    outcome = train(smoke_cfg, dataset, run)
    return run, outcome.checkpoints


class TestSeedStreams:
    def test_streams_are_distinct_and_stable(self) -> None:
        streams = seed_streams(0)
        assert len(set(streams.values())) == len(streams)
        assert seed_streams(0) == streams
        assert seed_streams(1) != streams


class TestGenData:
    def test_manifest_describes_the_dataset(self, smoke_cfg: TrainConfig, dataset: Path) -> None:
        manifest = load_manifest(manifest_path(dataset))
        assert manifest.n_transitions == 8 * 19
        assert manifest.dataset_sha256 == file_sha256(dataset)
        assert manifest.config_hash == config_hash(smoke_cfg)
        assert manifest.maze == "umaze"

    def test_regeneration_is_bit_identical(
        self, smoke_cfg: TrainConfig, dataset: Path, tmp_path: Path
    ) -> None:
        again = gen_data(smoke_cfg, tmp_path / "again.tdat")
        assert again.dataset_sha256 == file_sha256(dataset)

    def test_dataset_header_carries_hash_and_seed(self, smoke_cfg: TrainConfig, dataset: Path) -> None:
        meta = read_container(dataset).meta
        assert meta["config_hash"] == config_hash(smoke_cfg)
        assert meta["seed"] == smoke_cfg.seed


class TestTrain:
    def test_writes_every_artifact(self, smoke_run: tuple[RunLayout, dict[str, str]]) -> None:
        run, checkpoints = smoke_run
        assert set(checkpoints) == {"repr", "dynamics", "policy"}
        for path in (
            run.config, run.repr_ckpt, run.dynamics_ckpt, run.policy_ckpt,
            run.dynamics_report, run.refresh_log, run.learning_curve,
            run.synthetic_buffer, run.synthetic_csv,
        ):  # fmt: skip
            assert path.is_file(), path
        for phase in ("repr", "dynamics", "policy"):
            assert run.loss_csv(phase).read_text().startswith("step,")
        assert file_sha256(run.policy_ckpt) == checkpoints["policy"]

    def test_checkpoints_carry_hash_and_seed(
        self, smoke_cfg: TrainConfig, smoke_run: tuple[RunLayout, dict[str, str]]
    ) -> None:
        run, _ = smoke_run
        for path in (run.repr_ckpt, run.dynamics_ckpt, run.policy_ckpt):
            meta = read_container(path).meta
            assert (meta["config_hash"], meta["seed"]) == (config_hash(smoke_cfg), smoke_cfg.seed)

    def test_eight_refreshes_from_thirty_percent(
        self, smoke_cfg: TrainConfig, dataset: Path, smoke_run: tuple[RunLayout, dict[str, str]]
    ) -> None:
        run, _ = smoke_run
        lines = [RefreshStats.model_validate_json(line) for line in run.refresh_log.read_text().splitlines()]
        assert len(lines) == 8
        assert lines[0].step == round(0.3 * smoke_cfg.policy_steps)
        _, D, _ = load_dataset(dataset)
        assert all(line.count == round(0.5 * len(D)) for line in lines)

    def test_learning_curve_has_ten_points(self, smoke_run: tuple[RunLayout, dict[str, str]]) -> None:
        run, _ = smoke_run
        curve = np.loadtxt(run.learning_curve, delimiter=",", skiprows=1, ndmin=2)
        assert curve.shape == (10, 2)
        assert np.all((curve[:, 1] >= 0) & (curve[:, 1] <= 1))

    def test_rerun_reproduces_checkpoint_hashes(
        self,
        smoke_cfg: TrainConfig,
        dataset: Path,
        smoke_run: tuple[RunLayout, dict[str, str]],
        tmp_path: Path,
    ) -> None:
        _, checkpoints = smoke_run
        assert train(smoke_cfg, dataset, RunLayout(tmp_path)).checkpoints == checkpoints

    def test_phases_one_at_a_time_match_a_full_run(
        self,
        smoke_cfg: TrainConfig,
        dataset: Path,
        smoke_run: tuple[RunLayout, dict[str, str]],
        tmp_path: Path,
    ) -> None:
        _, checkpoints = smoke_run
        run = RunLayout(tmp_path)
        hashes: dict[str, str] = {}
        for phase in ("repr", "dynamics", "policy"):
            hashes.update(train(smoke_cfg, dataset, run, phase=phase).checkpoints)
        assert hashes == checkpoints

    def test_policy_phase_needs_earlier_checkpoints(
        self, smoke_cfg: TrainConfig, dataset: Path, tmp_path: Path
    ) -> None:
        with pytest.raises(PhaseOrderError, match="repr checkpoint"):
            train(smoke_cfg, dataset, RunLayout(tmp_path), phase="policy")

    def test_no_rollouts_logs_no_refreshes(
        self, smoke_cfg: TrainConfig, dataset: Path, tmp_path: Path
    ) -> None:
        cfg = smoke_cfg.model_copy(update={"rollout": smoke_cfg.rollout.model_copy(update={"enabled": False})})
        outcome = train(cfg, dataset, RunLayout(tmp_path))
        assert outcome.refreshes == 0
        assert outcome.synthetic_transitions == 0
        run = RunLayout(tmp_path)
        assert not run.refresh_log.exists()
        assert not run.synthetic_buffer.exists()
        assert not run.synthetic_csv.exists()

    def test_synthetic_buffer_is_dumped_as_transitions(
        self, smoke_cfg: TrainConfig, dataset: Path, tmp_path: Path
    ) -> None:
        run = RunLayout(tmp_path)
        outcome = train(smoke_cfg, dataset, run)
        synthetic = load_transitions(run.synthetic_buffer)
        assert len(synthetic) == outcome.synthetic_transitions > 0
        assert np.all(synthetic.source == SYNTHETIC)
        assert np.all(synthetic.rollout_step >= 1)
        assert read_container(run.synthetic_buffer).meta["config_hash"] == config_hash(smoke_cfg)
        from_csv = read_transitions_csv(run.synthetic_csv)
        np.testing.assert_array_equal(from_csv.s_next, synthetic.s_next)
        np.testing.assert_array_equal(from_csv.origin, synthetic.origin)

    def test_json_export_writes_one_file_per_checkpoint(
        self, smoke_cfg: TrainConfig, dataset: Path, tmp_path: Path
    ) -> None:
        run = RunLayout(tmp_path)
        outcome = train(smoke_cfg, dataset, run, json_export=True)
        assert [Path(p).name for p in outcome.exports] == ["repr.json", "dynamics.json", "policy.json"]
        policy = json.loads((tmp_path / "policy.json").read_text())
        assert policy["meta"]["kind"] == read_container(run.policy_ckpt).kind
        assert "actor" in policy["networks"]

    def test_no_json_export_by_default(self, smoke_run: tuple[RunLayout, dict[str, str]]) -> None:
        run, _ = smoke_run
        for name in ("repr.json", "dynamics.json", "policy.json"):
            assert not (run.root / name).exists()

    def test_naive_arm_stores_its_state_codec(
        self, smoke_cfg: TrainConfig, dataset: Path, tmp_path: Path
    ) -> None:
        cfg = smoke_cfg.model_copy(update={"naive_state_dynamics": True})
        outcome = train(cfg, dataset, RunLayout(tmp_path))
        _, codec = load_dynamics(RunLayout(tmp_path).dynamics_ckpt)
        assert codec is not None
        assert outcome.refreshes == 8


def test_zero_sigma_matches_a_run_without_rollouts(
    smoke_cfg: TrainConfig, dataset: Path, smoke_run: tuple[RunLayout, dict[str, str]]
) -> None:
    run, _ = smoke_run
    _, D, _ = load_dataset(dataset)
    ae, _ = load_repr(run.repr_ckpt)
    model, _ = load_dynamics(run.dynamics_ckpt)
    env = make_env(smoke_cfg.maze)
    with_rollouts = run_policy_phase(D, ae, model, ae, smoke_cfg, env, sigma=0.0)
    off = smoke_cfg.model_copy(update={"rollout": smoke_cfg.rollout.model_copy(update={"enabled": False})})
    without = run_policy_phase(D, ae, model, ae, off, env)
    assert len(with_rollouts.refreshes) == 8
    assert not without.refreshes
    assert (
        with_rollouts.learner.policy.net.weights.tobytes()
        == without.learner.policy.net.weights.tobytes()
    )
    assert with_rollouts.history == without.history


class TestEvaluate:
    def test_report_for_a_trained_policy(
        self, smoke_cfg: TrainConfig, smoke_run: tuple[RunLayout, dict[str, str]]
    ) -> None:
        run, checkpoints = smoke_run
        report = evaluate_run(smoke_cfg, run)
        assert report.checkpoint_sha256 == checkpoints["policy"]
        assert report.goals == ["0,2"]
        assert report.seeds == [0, 1]
        assert len(report.per_seed) == 2
        assert 0.0 <= report.aggregate.mean <= 1.0
        assert EvalReport.model_validate_json(report.model_dump_json()) == report

    def test_oracle_needs_no_checkpoints(self, smoke_cfg: TrainConfig) -> None:
        report = evaluate_run(smoke_cfg, None, agent_kind="oracle")
        assert report.aggregate.mean == 1.0
        assert report.aggregate.std == 0.0
        assert report.checkpoint_sha256 is None

    def test_policy_agent_needs_a_run(self, smoke_cfg: TrainConfig) -> None:
        with pytest.raises(PhaseOrderError, match="run directory"):
            evaluate_run(smoke_cfg, None)

    def test_greedy_agent_reads_only_the_representation(
        self, smoke_cfg: TrainConfig, smoke_run: tuple[RunLayout, dict[str, str]]
    ) -> None:
        run, checkpoints = smoke_run
        report = evaluate_run(smoke_cfg, run, agent_kind="greedy", goals=[(2, 0)])
        assert report.checkpoint_sha256 == checkpoints["repr"]
        assert list(report.per_goal) == ["2,0"]

    def test_goal_stats_band(self) -> None:
        stats = goal_stats([0.5, 1.0])
        assert (stats.mean, stats.std, stats.lower, stats.upper) == (0.75, 0.25, 0.25, 1.25)

    def test_committed_schema_is_current(self) -> None:
        committed = json.loads((REPO_ROOT / "eval_report.schema.json").read_text())
        assert committed == json_schema() == EvalReport.model_json_schema()
        assert committed["title"] == "EvalReport"


class TestHeatmap:
    def test_single_goal_writes_a_file(
        self, smoke_cfg: TrainConfig, smoke_run: tuple[RunLayout, dict[str, str]], tmp_path: Path
    ) -> None:
        run, _ = smoke_run
        out = tmp_path / "h.csv"
        (summary,) = run_heatmap(run.repr_ckpt, smoke_cfg, [(0, 2)], out)
        assert summary.n_cells == 7
        assert len(out.read_text().splitlines()) == 8
        assert -1.0 <= summary.rank_agreement <= 1.0

    def test_several_goals_write_a_directory(
        self, smoke_cfg: TrainConfig, smoke_run: tuple[RunLayout, dict[str, str]], tmp_path: Path
    ) -> None:
        run, _ = smoke_run
        goals = corner_goals(make_env(smoke_cfg.maze))
        summaries = run_heatmap(run.repr_ckpt, smoke_cfg, goals, tmp_path / "maps")
        assert {Path(s.path).name for s in summaries} == {f"heatmap_{x}_{y}.csv" for x, y in goals}


@pytest.mark.slow
def test_corner_heatmaps_follow_shortest_paths(tmp_path: Path) -> None:
    cfg = load_config(REPO_ROOT / "configs" / "maze7.yaml")
    data = tmp_path / "maze7.tdat"
    gen_data(cfg, data)
    run = RunLayout(tmp_path / "run")
    train(cfg, data, run, phase="repr")
    goals = corner_goals(make_env(cfg.maze))
    summaries = run_heatmap(run.repr_ckpt, cfg, goals, tmp_path / "maps")
    assert all(s.rank_agreement >= 0.95 for s in summaries), [s.rank_agreement for s in summaries]


@pytest.mark.slow
def test_ablation_arms_on_the_play_maze(tmp_path: Path) -> None:
    arms = {
        "latent": {},
        "real_only": {"rollout": {"enabled": False}},
        "naive": {"naive_state_dynamics": True},
    }
    success: dict[str, list[float]] = {arm: [] for arm in arms}
    leakage: dict[str, list[float]] = {arm: [] for arm in arms}
    for seed in range(8):
        data = tmp_path / f"maze11-{seed}.tdat"
        gen_data(load_config(PLAY, seed=seed), data)
        for arm, overrides in arms.items():
            arm_cfg = load_config(PLAY, seed=seed, **overrides)
            run = RunLayout(tmp_path / f"{arm}-{seed}")
            train(arm_cfg, data, run)
            success[arm].append(evaluate_run(arm_cfg, run).aggregate.mean)
            if run.refresh_log.exists():
                lines = [json.loads(line) for line in run.refresh_log.read_text().splitlines()]
                leakage[arm].extend(line["wall_leakage"] for line in lines)
    mean = {arm: 100 * float(np.mean(values)) for arm, values in success.items()}
    assert mean["latent"] >= mean["real_only"] - 2, mean
    assert mean["latent"] >= mean["naive"] + 5, mean
    assert np.mean(leakage["naive"]) > np.mean(leakage["latent"])
