"""Binary checkpoints for a trained model.

Layout (all integers little-endian u32)::

    b"UJDT" | version | n_tensors
    n_tensors x ( name_len | name (utf-8) | ndim | dims... | float32le payload )
    meta_len | meta (utf-8 JSON)

Tensors hold network parameters, the class memory buffers and the anchors.
Everything else (architecture, counters, thresholds, caller extras) lives in the
JSON trailer.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .anchors import AnchorSet
from .model import ArchConfig, Network
from .pseudo_label import ClassMemory

MAGIC = b"UJDT"
VERSION = 1
_U32 = struct.Struct("<I")


class CheckpointError(Exception):
    def __init__(self, section: str, message: str):
        super().__init__(f"checkpoint section '{section}': {message}")
        self.section = section


def _tensors(model) -> dict[str, np.ndarray]:
    out = {f"param/{k}": v for k, v in model.net.params.items()}
    out["memory/buffers"] = model.memory.buffers
    out["anchors/centroids"] = model.anchors.centroids
    out["anchors/decision"] = model.anchors.decision_anchor
    return out


def encode(model, extra: dict | None = None) -> bytes:
    parts = [MAGIC, _U32.pack(VERSION)]
    tensors = _tensors(model)
    parts.append(_U32.pack(len(tensors)))
    for name, arr in tensors.items():
        raw = name.encode()
        arr = np.ascontiguousarray(arr, dtype="<f4")
        parts += [_U32.pack(len(raw)), raw, _U32.pack(arr.ndim)]
        parts += [_U32.pack(d) for d in arr.shape]
        parts.append(arr.tobytes())
    meta = {
        "arch": asdict(model.net.arch),
        "in_channels": model.net.in_channels,
        "n_classes": model.net.n_classes,
        "memory": {
            "capacity": model.memory.capacity,
            "counts": model.memory.counts.tolist(),
            "cursors": model.memory.cursors.tolist(),
        },
        "anchor_momentum": model.anchors.momentum,
        "last_tau": model.last_tau,
        "joint_decision": model.joint_decision,
        "threshold_method": model.threshold_method,
        "bin_count": model.bin_count,
        "fixed_tau": model.fixed_tau,
        "extra": extra or {},
    }
    blob = json.dumps(meta, sort_keys=True).encode()
    parts += [_U32.pack(len(blob)), blob]
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, section: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(section, f"truncated: needed {n} bytes at offset {self.pos}, file has {len(self.data)}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, section: str) -> int:
        return _U32.unpack(self.take(4, section))[0]


def decode(data: bytes):
    """Inverse of :func:`encode`; returns ``(TrainedModel, extra)``."""
    from .pipeline import TrainedModel

    r = _Reader(data)
    if r.take(4, "header") != MAGIC:
        raise CheckpointError("header", "bad magic bytes")
    version = r.u32("header")
    if version != VERSION:
        raise CheckpointError("header", f"unsupported version {version}")
    n = r.u32("tensors")
    tensors = {}
    for i in range(n):
        name_len = r.u32(f"tensor #{i}")
        try:
            name = r.take(name_len, f"tensor #{i}").decode()
        except UnicodeDecodeError as e:
            raise CheckpointError(f"tensor #{i}", "name is not utf-8") from e
        ndim = r.u32(name)
        shape = tuple(r.u32(name) for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        tensors[name] = np.frombuffer(r.take(4 * count, name), dtype="<f4").reshape(shape).astype(np.float32)
    blob = r.take(r.u32("meta"), "meta")
    try:
        meta = json.loads(blob)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CheckpointError("meta", f"invalid JSON: {e}") from e
    if r.pos != len(data):
        raise CheckpointError("trailer", f"{len(data) - r.pos} unexpected bytes after metadata")

    try:
        arch = ArchConfig(**meta["arch"])
        net = Network(arch, meta["in_channels"], meta["n_classes"], dtype=np.float32)
        for k in net.params:
            got = tensors[f"param/{k}"]
            if got.shape != net.params[k].shape:
                raise CheckpointError(f"param/{k}", f"shape {got.shape} != expected {net.params[k].shape}")
            net.params[k] = got.copy()
        buf = tensors["memory/buffers"]
        mem = ClassMemory(buf.shape[0], buf.shape[2], meta["memory"]["capacity"])
        mem.buffers = buf.copy()
        mem.counts = np.asarray(meta["memory"]["counts"], dtype=np.int64)
        mem.cursors = np.asarray(meta["memory"]["cursors"], dtype=np.int64)
        anchors = AnchorSet(tensors["anchors/centroids"].copy(), meta["anchor_momentum"], tensors["anchors/decision"].copy())
    except KeyError as e:
        key = str(e.args[0])
        raise CheckpointError(key if "/" in key else "meta", f"missing entry {key!r}") from e
    model = TrainedModel(
        net=net,
        memory=mem,
        anchors=anchors,
        last_tau=meta["last_tau"],
        joint_decision=meta["joint_decision"],
        threshold_method=meta["threshold_method"],
        bin_count=meta["bin_count"],
        fixed_tau=meta["fixed_tau"],
    )
    return model, meta.get("extra", {})


def save_checkpoint(model, path, extra: dict | None = None) -> Path:
    path = Path(path)
    path.write_bytes(encode(model, extra))
    return path


def load_checkpoint(path):
    path = Path(path)
    if not path.exists():
        raise CheckpointError("file", f"{path} does not exist")
    return decode(path.read_bytes())
