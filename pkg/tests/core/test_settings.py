from __future__ import annotations

from pathlib import Path

import pytest
from pydantic import ValidationError

from tempdata.settings.base import TrainConfig, canonical_json, config_hash, json_schema, load_config

REPO_ROOT = Path(__file__).resolve().parents[2]


@pytest.fixture(autouse=True)
def _no_tempdata_env(monkeypatch: pytest.MonkeyPatch) -> None:
    for name in ("TEMPDATA_SEED", "TEMPDATA_REPRESENTATION__TAU", "TEMPDATA_POLICY_STEPS"):
        monkeypatch.delenv(name, raising=False)


def write_yaml(tmp_path: Path, text: str) -> Path:
    path = tmp_path / "run.yaml"
    path.write_text(text)
    return path


class TestLoadConfig:
    def test_defaults_without_a_file(self) -> None:
        cfg = load_config()
        assert cfg.seed == 0
        assert cfg.representation.tau == 0.95
        assert cfg.rollout.sigma == 0.5

    def test_yaml_values_apply(self, tmp_path: Path) -> None:
        path = write_yaml(tmp_path, "seed: 4\nrepresentation:\n  latent_dim: 8\n")
        cfg = load_config(path)
        assert (cfg.seed, cfg.representation.latent_dim) == (4, 8)
        assert cfg.representation.eta1 == 1.0

    def test_environment_beats_yaml(self, tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv("TEMPDATA_SEED", "9")
        monkeypatch.setenv("TEMPDATA_REPRESENTATION__TAU", "0.9")
        cfg = load_config(write_yaml(tmp_path, "seed: 4\n"))
        assert cfg.seed == 9
        assert cfg.representation.tau == 0.9

    def test_overrides_beat_environment(self, tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv("TEMPDATA_SEED", "9")
        assert load_config(write_yaml(tmp_path, "seed: 4\n"), seed=2).seed == 2

    def test_nested_override_merges_with_yaml(self, tmp_path: Path) -> None:
        path = write_yaml(tmp_path, "rollout:\n  k_steps: 5\n")
        cfg = load_config(path, rollout={"enabled": False})
        assert cfg.rollout.k_steps == 5
        assert not cfg.rollout.enabled

    @pytest.mark.parametrize(
        "text",
        [
            "unknown_key: 1\n",
            "representation:\n  temperature: 2\n",
            "representation:\n  d0_rule: fixed\n",
            "rollout:\n  sigma: 1.5\n",
        ],
    )
    def test_rejects_bad_files(self, tmp_path: Path, text: str) -> None:
        with pytest.raises(ValidationError):
            load_config(write_yaml(tmp_path, text))

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(FileNotFoundError, match="config file not found"):
            load_config(tmp_path / "absent.yaml")

    def test_goal_probabilities_must_sum_to_one(self) -> None:
        with pytest.raises(ValidationError, match="sum to 1"):
            TrainConfig(goals={"p_random_state_as_goal": 0.5})

    @pytest.mark.parametrize("name", ["maze7", "maze11-play", "smoke"])
    def test_shipped_configs_load(self, name: str) -> None:
        cfg = load_config(REPO_ROOT / "configs" / f"{name}.yaml")
        assert isinstance(cfg, TrainConfig)

    def test_maze7_drops_the_transition_term(self) -> None:
        cfg = load_config(REPO_ROOT / "configs" / "maze7.yaml")
        assert cfg.representation.eta2 == 0.0
        assert (cfg.representation.tau, cfg.representation.gamma) == (0.95, 0.99)
        assert load_config().representation.eta2 == 1.0


class TestConfigHash:
    def test_stable_for_equal_configs(self) -> None:
        assert config_hash(load_config()) == config_hash(load_config())

    def test_changes_with_any_field(self) -> None:
        assert config_hash(load_config()) != config_hash(load_config(seed=1))
        assert config_hash(load_config()) != config_hash(load_config(policy={"beta": 3.0}))

    def test_canonical_json_is_sorted(self) -> None:
        text = canonical_json(load_config())
        assert text.startswith('{"curve_episodes":')
        assert " " not in text


def test_json_schema_lists_sections() -> None:
    properties = json_schema()["properties"]
    assert {"maze", "representation", "rollout", "policy"} <= set(properties)
