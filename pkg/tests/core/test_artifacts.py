from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError

from tempdata.core.approximator import MLP
from tempdata.core.artifacts import (
    FORMAT_VERSION,
    container_to_json,
    decode_container,
    encode_container,
    export_json,
    file_sha256,
    pack_networks,
    read_container,
    write_container,
)
from tempdata.core.errors import CheckpointVersionError
from tempdata.core.manifest import DatasetManifest, json_schema, load_manifest, manifest_path, write_manifest

SHA = "0" * 64


class TestContainer:
    def test_equal_content_gives_equal_bytes(self, tmp_path: Path) -> None:
        arrays = {"x": np.arange(6.0).reshape(2, 3), "ids": np.arange(3, dtype=np.int64)}
        a = write_container(tmp_path / "a.bin", arrays, {"kind": "test", "seed": 1})
        b = write_container(tmp_path / "b.bin", dict(arrays), {"seed": 1, "kind": "test"})
        assert a == b == file_sha256(tmp_path / "a.bin")

    def test_arrays_and_meta_survive(self, tmp_path: Path) -> None:
        fn = MLP.init((3, 4, 2), np.random.default_rng(0))
        arrays, networks = pack_networks({"net": fn})
        write_container(tmp_path / "c.bin", arrays, {"kind": "test", "networks": networks})
        container = read_container(tmp_path / "c.bin", kind="test")
        restored = container.network("net")
        assert restored.layer_dims == (3, 4, 2)
        assert restored.weights.tobytes() == fn.weights.tobytes()

    def test_big_endian_arrays_are_stored_little_endian(self) -> None:
        big = np.arange(4, dtype=">f8")
        container = decode_container(encode_container({"x": big}, {"kind": "test"}))
        np.testing.assert_array_equal(container.arrays["x"], np.arange(4.0))

    def test_bad_magic(self) -> None:
        blob = encode_container({}, {"kind": "test"})
        with pytest.raises(CheckpointVersionError, match="not a tempdata artifact"):
            decode_container(b"NOPE" + blob[4:])

    def test_future_version(self) -> None:
        blob = encode_container({}, {"kind": "test"})
        patched = blob[:4] + struct.pack("<H", FORMAT_VERSION + 1) + blob[6:]
        with pytest.raises(CheckpointVersionError, match="format version"):
            decode_container(patched)

    def test_truncated(self) -> None:
        with pytest.raises(CheckpointVersionError, match="too short"):
            decode_container(b"TD")

    def test_kind_mismatch(self, tmp_path: Path) -> None:
        write_container(tmp_path / "p.bin", {}, {"kind": "policy"})
        with pytest.raises(CheckpointVersionError, match="holds a policy payload, expected repr"):
            read_container(tmp_path / "p.bin", kind="repr")

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(FileNotFoundError, match="artifact not found"):
            read_container(tmp_path / "absent.bin")


class TestJsonExport:
    def write(self, path: Path) -> MLP:
        fn = MLP.init((3, 4, 2), np.random.default_rng(0))
        arrays, networks = pack_networks({"net": fn})
        arrays["ids"] = np.arange(4, dtype=np.int64).reshape(2, 2)
        write_container(path, arrays, {"kind": "test", "seed": 3, "networks": networks})
        return fn

    def test_networks_and_arrays_are_listed(self, tmp_path: Path) -> None:
        fn = self.write(tmp_path / "c.ckpt")
        document = container_to_json(read_container(tmp_path / "c.ckpt"))
        assert document["format_version"] == FORMAT_VERSION
        assert document["meta"] == {"kind": "test", "seed": 3}
        net = document["networks"]["net"]
        assert net["layer_dims"] == [3, 4, 2]
        assert net["activation"] == fn.activation
        np.testing.assert_array_equal(np.asarray(net["weights"]), fn.weights)
        assert set(document["arrays"]) == {"ids"}
        ids = document["arrays"]["ids"]
        assert (ids["shape"], ids["data"]) == ([2, 2], [[0, 1], [2, 3]])
        assert np.dtype(ids["dtype"]) == np.int64

    def test_export_sits_next_to_the_artifact(self, tmp_path: Path) -> None:
        self.write(tmp_path / "c.ckpt")
        out = export_json(tmp_path / "c.ckpt")
        assert out == tmp_path / "c.json"
        assert json.loads(out.read_text()) == container_to_json(read_container(tmp_path / "c.ckpt"))

    def test_export_to_an_explicit_path(self, tmp_path: Path) -> None:
        self.write(tmp_path / "c.ckpt")
        assert export_json(tmp_path / "c.ckpt", tmp_path / "dump.json").is_file()

    def test_missing_artifact(self, tmp_path: Path) -> None:
        with pytest.raises(FileNotFoundError, match="artifact not found"):
            export_json(tmp_path / "absent.ckpt")


class TestManifest:
    def manifest(self, **changes: object) -> DatasetManifest:
        fields: dict[str, object] = {
            "seed": 0,
            "config_hash": SHA,
            "maze": "maze7",
            "maze_hash": SHA,
            "variant": "grid",
            "behavior": "planner",
            "n_traj": 2,
            "horizon": 10,
            "n_transitions": 18,
            "terminal_fraction": 0.1,
            "dataset_sha256": SHA,
        }
        return DatasetManifest.model_validate({**fields, **changes})

    def test_path_sits_next_to_the_dataset(self) -> None:
        assert manifest_path("data/maze7.tdat") == Path("data/maze7.manifest.json")

    def test_round_trip(self, tmp_path: Path) -> None:
        manifest = self.manifest()
        write_manifest(tmp_path / "m.json", manifest)
        assert load_manifest(tmp_path / "m.json") == manifest

    @pytest.mark.parametrize(
        "changes",
        [{"config_hash": "abc"}, {"terminal_fraction": 1.5}, {"variant": "hex"}, {"extra": 1}],
    )
    def test_rejects_malformed(self, changes: dict[str, object]) -> None:
        with pytest.raises(ValidationError):
            self.manifest(**changes)

    def test_schema(self) -> None:
        assert "dataset_sha256" in json_schema()["properties"]
