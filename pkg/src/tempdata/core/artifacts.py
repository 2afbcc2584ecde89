"""Versioned binary container shared by datasets and checkpoints.

Layout, all little-endian::

    b"TDAT" | uint16 format version | uint32 header length | JSON header | array bytes

The header is sorted-keys JSON holding free-form ``meta`` (always including
``kind``, ``config_hash`` and ``seed``) and a directory of arrays
(``name``, ``dtype``, ``shape``, ``offset``, ``nbytes``). Arrays follow in
directory order. Writing the same content twice produces the same bytes, so
file hashes double as content hashes.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from tempdata.core.approximator import MLP
from tempdata.core.errors import CheckpointVersionError

MAGIC = b"TDAT"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sHI")


@dataclass(frozen=True)
class Container:
    meta: dict[str, Any]
    arrays: dict[str, np.ndarray]

    @property
    def kind(self) -> str:
        return str(self.meta.get("kind", ""))

    def expect_kind(self, kind: str, path: str | Path = "") -> Container:
        if self.kind != kind:
            where = f" {path}" if path else ""
            msg = f"artifact{where} holds a {self.kind or 'untyped'} payload, expected {kind}"
            raise CheckpointVersionError(msg)
        return self

    def network(self, name: str) -> MLP:
        spec = self.meta["networks"][name]
        return MLP(
            tuple(spec["layer_dims"]),
            self.arrays[f"{name}.weights"].astype(np.float64),
            spec["activation"],
        )


def _little_endian(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    if array.dtype.byteorder == ">" or (
        array.dtype.byteorder == "=" and not np.little_endian
    ):
        array = array.astype(array.dtype.newbyteorder("<"))
    return array


def encode_container(arrays: dict[str, np.ndarray], meta: dict[str, Any]) -> bytes:
    directory = []
    chunks = []
    offset = 0
    for name, raw in arrays.items():
        array = _little_endian(np.asarray(raw))
        data = array.tobytes(order="C")
        directory.append(
            {
                "name": name,
                "dtype": array.dtype.str,
                "shape": list(array.shape),
                "offset": offset,
                "nbytes": len(data),
            }
        )
        chunks.append(data)
        offset += len(data)
    header = json.dumps(
        {"version": FORMAT_VERSION, "meta": meta, "arrays": directory},
        sort_keys=True,
        separators=(",", ":"),
    ).encode()
    return _PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)) + header + b"".join(chunks)


def decode_container(blob: bytes, source: str = "<bytes>") -> Container:
    if len(blob) < _PREFIX.size:
        msg = f"{source} is too short to be a tempdata artifact"
        raise CheckpointVersionError(msg)
    magic, version, header_len = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        msg = f"{source} is not a tempdata artifact (magic {magic!r})"
        raise CheckpointVersionError(msg)
    if version != FORMAT_VERSION:
        msg = f"{source} has format version {version}, this build reads version {FORMAT_VERSION}"
        raise CheckpointVersionError(msg)
    start = _PREFIX.size
    header = json.loads(blob[start : start + header_len])
    body = memoryview(blob)[start + header_len :]
    arrays = {}
    for entry in header["arrays"]:
        chunk = body[entry["offset"] : entry["offset"] + entry["nbytes"]]
        dtype = np.dtype(entry["dtype"])
        arrays[entry["name"]] = (
            np.frombuffer(chunk, dtype=dtype).reshape(entry["shape"]).astype(dtype.newbyteorder("="))
        )
    return Container(header["meta"], arrays)


def write_container(
    path: str | Path, arrays: dict[str, np.ndarray], meta: dict[str, Any]
) -> str:
    """Write a container to ``path`` and return its SHA-256."""
    blob = encode_container(arrays, meta)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def read_container(path: str | Path, kind: str | None = None) -> Container:
    path = Path(path)
    if not path.is_file():
        msg = f"artifact not found: {path}"
        raise FileNotFoundError(msg)
    container = decode_container(path.read_bytes(), str(path))
    if kind is not None:
        container.expect_kind(kind, path)
    return container


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def container_to_json(container: Container) -> dict[str, Any]:
    """A JSON-ready view of ``container`` for inspection.

    Networks appear as ``layer_dims``, ``activation`` and ``weights``; every
    other array as ``dtype``, ``shape`` and nested ``data`` lists.
    """
    specs = container.meta.get("networks", {})
    networks = {
        name: {**spec, "weights": container.arrays[f"{name}.weights"].tolist()}
        for name, spec in specs.items()
    }
    packed = {f"{name}.weights" for name in specs}
    arrays = {
        name: {"dtype": array.dtype.str, "shape": list(array.shape), "data": array.tolist()}
        for name, array in container.arrays.items()
        if name not in packed
    }
    return {
        "format_version": FORMAT_VERSION,
        "meta": {k: v for k, v in container.meta.items() if k != "networks"},
        "networks": networks,
        "arrays": arrays,
    }


def export_json(path: str | Path, out: str | Path | None = None) -> Path:
    """Write the artifact at ``path`` as JSON, by default to ``<path stem>.json``."""
    path = Path(path)
    target = path.with_suffix(".json") if out is None else Path(out)
    document = container_to_json(read_container(path))
    target.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n")
    return target


def pack_networks(networks: dict[str, MLP]) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    """Arrays and the ``networks`` meta entry for a set of named MLPs."""
    arrays = {f"{name}.weights": fn.weights for name, fn in networks.items()}
    meta = {
        name: {"layer_dims": list(fn.layer_dims), "activation": fn.activation}
        for name, fn in networks.items()
    }
    return arrays, meta

