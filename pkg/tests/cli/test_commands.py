from __future__ import annotations

import json
from pathlib import Path

import pytest

import tempdata.cli
from tempdata.cli import _console, data, evaluate, oracles, train
from tempdata.core.errors import MazeLayoutError, NumericalAbortError

REPO_ROOT = Path(__file__).resolve().parents[2]
SMOKE = str(REPO_ROOT / "configs" / "smoke.yaml")


class TestMain:
    @pytest.mark.parametrize(
        ("exc", "code"),
        [
            (MazeLayoutError("layout is empty"), 1),
            (NumericalAbortError("repr", "non-finite loss"), 2),
            (FileNotFoundError("dataset not found: x"), 1),
            (ValueError("pass --goal x,y or --corners"), 1),
        ],
    )
    def test_errors_become_exit_codes(
        self,
        monkeypatch: pytest.MonkeyPatch,
        capsys: pytest.CaptureFixture[str],
        exc: Exception,
        code: int,
    ) -> None:
        def boom() -> None:
            raise exc

        monkeypatch.setattr(tempdata.cli, "app", boom)
        with pytest.raises(SystemExit) as info:
            tempdata.cli.main()
        assert info.value.code == code
        assert capsys.readouterr().err.startswith("tempdata: error: ")


class TestParseCell:
    def test_parses(self) -> None:
        assert _console.parse_cell("3,4") == (3, 4)

    @pytest.mark.parametrize("text", ["3", "3,4,5", "a,b"])
    def test_rejects(self, text: str) -> None:
        with pytest.raises(ValueError, match="goal"):
            _console.parse_cell(text)


def test_verify_oracles_prints_ok_lines(capsys: pytest.CaptureFixture[str], tmp_path: Path) -> None:
    oracles.verify_oracles(config=SMOKE, goal="0,2", out=tmp_path / "oracle.csv")
    lines = capsys.readouterr().out.splitlines()
    assert lines
    assert all(line.startswith("OK:") for line in lines)
    assert len((tmp_path / "oracle.csv").read_text().splitlines()) == 8


def test_gen_data_prints_the_manifest(capsys: pytest.CaptureFixture[str], tmp_path: Path) -> None:
    out = tmp_path / "smoke.tdat"
    data.gen_data(out, config=SMOKE, seed=5, csv=True)
    manifest = json.loads(capsys.readouterr().out)
    assert manifest["seed"] == 5
    assert (tmp_path / "smoke.manifest.json").is_file()
    assert (tmp_path / "smoke.trajectories.csv").is_file()
    assert (tmp_path / "smoke.labeled.csv").read_text().startswith("traj_id,t,")


def test_train_exports_checkpoints_as_json(capsys: pytest.CaptureFixture[str], tmp_path: Path) -> None:
    dataset = tmp_path / "smoke.tdat"
    data.gen_data(dataset, config=SMOKE)
    capsys.readouterr()
    train.train(dataset, tmp_path / "run", config=SMOKE, phase="repr", export_json=True)
    outcome = json.loads(capsys.readouterr().out)
    assert outcome["exports"] == [str(tmp_path / "run" / "repr.json")]
    exported = json.loads((tmp_path / "run" / "repr.json").read_text())
    assert set(exported["networks"]) == {"encoder", "decoder", "target_encoder"}


def test_eval_oracle_without_a_run(capsys: pytest.CaptureFixture[str], tmp_path: Path) -> None:
    out = tmp_path / "report.json"
    evaluate.evaluate(config=SMOKE, agent="oracle", goal=["2,2", "0,2"], out=out)
    report = json.loads(out.read_text())
    assert report["goals"] == ["2,2", "0,2"]
    assert report["aggregate"]["mean"] == 1.0
    assert json.loads(capsys.readouterr().out) == report


def test_heatmap_needs_a_goal(tmp_path: Path) -> None:
    with pytest.raises(ValueError, match="--goal"):
        evaluate.heatmap(tmp_path, tmp_path / "h.csv", config=SMOKE)
