from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from tempdata.core.approximator import MLP
from tempdata.core.augmentation import (
    RefreshStats,
    RolloutBuffer,
    RolloutConfig,
    append_jsonl,
    provenance_ok,
    refresh,
    refresh_size,
    refresh_steps,
    rollout,
    rollout_schedule,
    wall_leakage,
)
from tempdata.core.dataset import SYNTHETIC, TransitionSet
from tempdata.core.dynamics import DynamicsConfig, LatentDynamics, NaiveStateCodec
from tempdata.core.errors import EmptyDatasetError
from tempdata.core.maze import GridMaze, load_layout
from tempdata.core.representation import TemporalAutoencoder


def still_actor(s: np.ndarray, g: np.ndarray) -> np.ndarray:
    return np.zeros((len(s), 2))


def zero_dynamics() -> LatentDynamics:
    return LatentDynamics(MLP.zeros((4, 2)), 2, learn_variance=False)


@pytest.fixture
def codec(open5_data: TransitionSet) -> NaiveStateCodec:
    return NaiveStateCodec.fit(open5_data.s)


class TestSchedule:
    def test_default_refreshes(self) -> None:
        steps = refresh_steps(1000, RolloutConfig())
        assert steps == [300, 400, 500, 600, 700, 800, 900, 1000]

    def test_short_run(self) -> None:
        assert refresh_steps(20, RolloutConfig()) == [6, 8, 10, 12, 14, 16, 18, 20]

    @pytest.mark.parametrize("total", [10, 137, 1000, 50_000])
    def test_nothing_before_warmup(self, total: int) -> None:
        cfg = RolloutConfig()
        steps = refresh_steps(total, cfg)
        assert len(steps) == 8
        assert min(steps) >= 0.3 * total
        assert all(rollout_schedule(step, total, cfg) == "none" for step in range(min(steps)))

    def test_disabled(self) -> None:
        cfg = RolloutConfig(enabled=False)
        assert refresh_steps(1000, cfg) == []
        assert rollout_schedule(300, 1000, cfg) == "none"
        assert cfg.effective_sigma == 0.0

    def test_step_out_of_range(self) -> None:
        with pytest.raises(ValueError, match="outside"):
            rollout_schedule(1001, 1000, RolloutConfig())

    def test_refresh_size(self) -> None:
        assert refresh_size(348, RolloutConfig()) == 174
        assert refresh_size(10, RolloutConfig(refresh_size_rule=0.25)) == 2

    @pytest.mark.parametrize("sigma", [0.0, 1.0])
    def test_sigma_bounds(self, sigma: float) -> None:
        with pytest.raises(ValueError):
            RolloutConfig(sigma=sigma)


class TestRollout:
    def test_count_and_provenance(
        self, open5_data: TransitionSet, open5_env: GridMaze, codec: NaiveStateCodec
    ) -> None:
        cfg = RolloutConfig(k_steps=3)
        model = LatentDynamics.init(2, (8,), np.random.default_rng(0), DynamicsConfig())
        result = rollout(open5_data, still_actor, codec, model, cfg, 10, 0, env=open5_env)
        data = result.transitions
        assert len(data) <= 10 * 3
        assert provenance_ok(data, open5_data, 3)
        assert np.all(data.source == SYNTHETIC)
        assert data.terminals_consistent(open5_env)

    def test_goals_come_from_the_start_transition(
        self, open5_data: TransitionSet, open5_env: GridMaze, codec: NaiveStateCodec
    ) -> None:
        result = rollout(
            open5_data, still_actor, codec, zero_dynamics(), RolloutConfig(), 6, 1, env=open5_env
        )
        data = result.transitions
        np.testing.assert_array_equal(data.g, open5_data.g[data.origin])

    def test_zero_dynamics_decode_to_the_state_mean(
        self, open5_data: TransitionSet, open5_env: GridMaze, codec: NaiveStateCodec
    ) -> None:
        cfg = RolloutConfig(k_steps=2)
        data = rollout(open5_data, still_actor, codec, zero_dynamics(), cfg, 5, 0, env=open5_env).transitions
        assert len(data) == 10
        np.testing.assert_allclose(data.s_next, np.broadcast_to(codec.state_mean, data.s_next.shape))
        second = data.rollout_step == 2
        np.testing.assert_allclose(data.s[second], data.s_next[~second])

    def test_identity_dynamics_reproduce_the_start_states(
        self, open5_data: TransitionSet, open5_env: GridMaze
    ) -> None:
        ae = TemporalAutoencoder(MLP.identity(2), MLP.identity(2), np.zeros(2), np.ones(2))
        keep = LatentDynamics(MLP((4, 2), np.array([1, 0, 0, 1, 0, 0, 0, 0, 0, 0.0])), 2, learn_variance=False)
        result = rollout(open5_data, still_actor, ae, keep, RolloutConfig(k_steps=3), 8, 0, env=open5_env)
        data = result.transitions
        assert len(data) == 8 * 3
        np.testing.assert_allclose(data.s, open5_data.s[data.origin], atol=1e-12)
        np.testing.assert_allclose(data.s_next, data.s, atol=1e-12)
        assert result.mean_latent_step_norm == pytest.approx(0.0, abs=1e-12)
        assert wall_leakage(open5_env, data.s_next) == 0.0

    def test_non_finite_latents_truncate_chains(
        self, open5_data: TransitionSet, open5_env: GridMaze, codec: NaiveStateCodec
    ) -> None:
        broken = LatentDynamics(MLP((4, 2), np.full(10, np.nan)), 2, learn_variance=False)
        result = rollout(open5_data, still_actor, codec, broken, RolloutConfig(), 4, 0, env=open5_env)
        assert len(result.transitions) == 0
        assert result.truncated == 4

    def test_same_seed_same_rollouts(
        self, open5_data: TransitionSet, open5_env: GridMaze, codec: NaiveStateCodec
    ) -> None:
        model = LatentDynamics.init(2, (8,), np.random.default_rng(0), DynamicsConfig())
        a = rollout(open5_data, still_actor, codec, model, RolloutConfig(), 8, 5, env=open5_env, sample=True)
        b = rollout(open5_data, still_actor, codec, model, RolloutConfig(), 8, 5, env=open5_env, sample=True)
        np.testing.assert_array_equal(a.transitions.s_next, b.transitions.s_next)

    def test_empty_dataset(self, open5_env: GridMaze, codec: NaiveStateCodec) -> None:
        with pytest.raises(EmptyDatasetError):
            rollout(TransitionSet.empty(), still_actor, codec, zero_dynamics(), RolloutConfig(), 1, 0, env=open5_env)

    def test_provenance_rejects_deep_steps(
        self, open5_data: TransitionSet, open5_env: GridMaze, codec: NaiveStateCodec
    ) -> None:
        data = rollout(
            open5_data, still_actor, codec, zero_dynamics(), RolloutConfig(k_steps=3), 4, 0, env=open5_env
        ).transitions
        assert not provenance_ok(data, open5_data, 2)
        assert not provenance_ok(open5_data, open5_data, 3)


class TestBuffer:
    def test_rejects_real_transitions(self, open5_data: TransitionSet) -> None:
        buffer = RolloutBuffer.for_dataset(len(open5_data), RolloutConfig())
        with pytest.raises(ValueError, match="only accepts synthetic"):
            buffer.append(open5_data.take(np.arange(3)))

    def test_capacity_follows_dataset_size(self) -> None:
        assert RolloutBuffer.for_dataset(100, RolloutConfig()).capacity == 200
        assert RolloutBuffer.for_dataset(100, RolloutConfig(buffer_cap_multiple=0.5)).capacity == 50

    def test_refresh_fills_and_evicts(
        self, open5_data: TransitionSet, open5_env: GridMaze, codec: NaiveStateCodec, tmp_path: Path
    ) -> None:
        cfg = RolloutConfig(buffer_cap_multiple=0.6)
        buffer = RolloutBuffer.for_dataset(len(open5_data), cfg)
        rng = np.random.default_rng(0)
        log = tmp_path / "refreshes.jsonl"
        for step in (30, 40, 50):
            stats = refresh(
                buffer, open5_data, still_actor, codec, zero_dynamics(), cfg,
                env=open5_env, step=step, rng=rng,
            )  # fmt: skip
            append_jsonl(log, stats)
            assert stats.count == refresh_size(len(open5_data), cfg)
        assert len(buffer) == buffer.capacity
        lines = [RefreshStats.model_validate_json(line) for line in log.read_text().splitlines()]
        assert [line.step for line in lines] == [30, 40, 50]
        assert sum(line.evicted for line in lines) == buffer.evicted > 0


class TestWallLeakage:
    def test_counts_walls_out_of_bounds_and_nan(self) -> None:
        env = GridMaze(load_layout("umaze"))
        states = np.array([[0.0, 1.0], [2.0, 1.0], [np.nan, 0.0], [9.0, 9.0]])
        assert wall_leakage(env, states) == 0.75

    def test_empty(self, open5_env: GridMaze) -> None:
        assert wall_leakage(open5_env, np.empty((0, 2))) == 0.0
