"""Single-file checkpoints: checksummed header + torch-serialized payload.

Layout::

    8 bytes   magic b"SQTTSCK1"
    4 bytes   format version (uint32 LE)
    8 bytes   payload length (uint64 LE)
    32 bytes  SHA-256 of the payload
    payload   torch.save({"kind", "config", "state", "meta"})
"""
from __future__ import annotations

import hashlib
import io
import os
import struct
from pathlib import Path

import torch

from .config import RunConfig

MAGIC = b"SQTTSCK1"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIQ32s")


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, kind: str, config: RunConfig, state: dict, meta: dict | None = None) -> None:
    buf = io.BytesIO()
    torch.save({"kind": kind, "config": config.to_dict(), "state": state, "meta": meta or {}}, buf)
    payload = buf.getvalue()
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, len(payload), hashlib.sha256(payload).digest())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(payload)
    os.replace(tmp, path)


def load_checkpoint(path, kind: str | None = None) -> tuple[RunConfig, dict, dict]:
    """Returns (config, state, meta); raises CheckpointError on any corruption."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CheckpointError(f"{path}: file too short for a checkpoint header (partial write?)")
    magic, version, length, digest = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (magic {magic!r})")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint format v{version} cannot be read by this release (v{FORMAT_VERSION}); "
            "migrate it with the release that wrote it"
        )
    payload = data[_HEADER.size :]
    if len(payload) != length:
        raise CheckpointError(f"{path}: payload is {len(payload)} bytes, header says {length} (partial file)")
    if hashlib.sha256(payload).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch, file is corrupt or was modified")
    blob = torch.load(io.BytesIO(payload), weights_only=True)
    if kind is not None and blob["kind"] != kind:
        raise CheckpointError(f"{path}: expected a {kind!r} checkpoint, found {blob['kind']!r}")
    return RunConfig.from_dict(blob["config"]), blob["state"], blob["meta"]
