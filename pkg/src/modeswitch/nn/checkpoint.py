"""Versioned binary checkpoints.

Layout (little-endian)::

    8 bytes   magic b"MSNNCKPT"
    uint32    format version (1)
    uint32    header length H
    H bytes   UTF-8 JSON: {"layers": [{"kind", "config", "params": [{"name", "shape"}]}],
                           "input_dim", "meta"}
    ...       float64 parameter data, in header order
"""
from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from .layers import LAYER_TYPES
from .network import Network

MAGIC = b"MSNNCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def to_bytes(net: Network, meta: dict | None = None) -> bytes:
    layers = []
    for layer in net.layers:
        layers.append({
            "kind": layer.kind,
            "config": layer.config(),
            "params": [{"name": n, "shape": list(layer.params[n].shape)}
                       for n in sorted(layer.params)],
        })
    header = json.dumps({"layers": layers, "input_dim": net.input_dim, "meta": meta or {}},
                        sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(header)))
    buf.write(header)
    for _, p in net.parameters():
        buf.write(np.ascontiguousarray(p, dtype="<f8").tobytes())
    return buf.getvalue()


def from_bytes(data: bytes) -> tuple[Network, dict]:
    if len(data) < 16 or data[:8] != MAGIC:
        raise CheckpointError("not a network checkpoint (bad magic)")
    version, hlen = struct.unpack_from("<II", data, 8)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if len(data) < 16 + hlen:
        raise CheckpointError(f"truncated header at byte offset {len(data)}")
    header = json.loads(data[16:16 + hlen])
    offset = 16 + hlen
    layers = []
    for spec in header["layers"]:
        cls = LAYER_TYPES.get(spec["kind"])
        if cls is None:
            raise CheckpointError(f"unknown layer kind {spec['kind']!r}")
        layer = cls(**spec["config"]) if spec["config"] else cls()
        for p in spec["params"]:
            shape = tuple(p["shape"])
            n = int(np.prod(shape)) * 8
            if offset + n > len(data):
                raise CheckpointError(f"truncated parameter data at byte offset {len(data)}")
            layer.params[p["name"]] = np.frombuffer(data, "<f8", count=n // 8,
                                                    offset=offset).reshape(shape).astype(float)
            offset += n
        layers.append(layer)
    if offset != len(data):
        raise CheckpointError(f"{len(data) - offset} trailing bytes after parameters")
    return Network(layers, header.get("input_dim")), header.get("meta", {})


def save(net: Network, path, meta: dict | None = None) -> None:
    Path(path).write_bytes(to_bytes(net, meta))


def load(path) -> tuple[Network, dict]:
    return from_bytes(Path(path).read_bytes())
