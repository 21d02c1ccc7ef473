"""Checkpoint container: parameters, masks and metadata in one checksummed file.

Layout::

    b"SDDCKPT\\x01"                 magic
    uint64 little-endian            header length
    header                          canonical JSON manifest
    data region                     little-endian float32 arrays, manifest order
    mask region                     packed little-endian bitsets, manifest order
    32 bytes                        sha256 of the header bytes

The header lists names, shapes, dtype, offsets, byte counts, popcounts and a
sha256 for every array and bitset.
"""

from __future__ import annotations

import hashlib
import json
import struct
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from autodiff import Tensor
from pruning.mask import PruneMask, pack_mask, unpack_mask
from utils import logger
from utils.errors import CheckpointError
from utils.io import atomic_write_bytes

MAGIC = b"SDDCKPT\x01"
DTYPE = "<f4"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    mask: PruneMask | None = None
    meta: dict = field(default_factory=dict)

    def tensors(self) -> dict[str, Tensor]:
        return {name: Tensor(value, requires_grad=True, name=name) for name, value in self.params.items()}


def encode_checkpoint(params: Mapping[str, Tensor | np.ndarray], mask: PruneMask | None = None, meta: dict | None = None) -> bytes:
    tensors, data_parts, offset = [], [], 0
    for name, value in params.items():
        arr = np.ascontiguousarray(value.data if isinstance(value, Tensor) else value, dtype=DTYPE)
        raw = arr.tobytes()
        tensors.append({"name": name, "shape": list(arr.shape), "dtype": DTYPE, "offset": offset,
                        "nbytes": len(raw), "sha256": hashlib.sha256(raw).hexdigest()})
        data_parts.append(raw)
        offset += len(raw)

    masks, mask_parts, moffset = [], [], 0
    if mask is not None:
        for name, m in mask.masks.items():
            raw = pack_mask(m)
            masks.append({"name": name, "shape": list(m.shape), "offset": moffset, "nbytes": len(raw),
                          "popcount": int(m.sum()), "sha256": hashlib.sha256(raw).hexdigest()})
            mask_parts.append(raw)
            moffset += len(raw)

    header = {
        "format": FORMAT_VERSION,
        "meta": meta or {},
        "tensors": tensors,
        "masks": masks,
        "mask_rounds": mask.rounds if mask is not None else None,
        "data_bytes": offset,
        "mask_bytes": moffset,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return b"".join([MAGIC, struct.pack("<Q", len(head)), head, *data_parts, *mask_parts, hashlib.sha256(head).digest()])


def save_checkpoint(path: Path, params, mask: PruneMask | None = None, meta: dict | None = None) -> Path:
    atomic_write_bytes(path, encode_checkpoint(params, mask, meta))
    logger.debug(f"[checkpoint] saved {Path(path).name}")
    return Path(path)


def load_checkpoint(path: Path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(path, "file not found")
    blob = path.read_bytes()
    if blob[:len(MAGIC)] != MAGIC:
        raise CheckpointError(path, "not a checkpoint (bad magic)")
    if len(blob) < len(MAGIC) + 8 + 32:
        raise CheckpointError(path, "truncated")
    (head_len,) = struct.unpack_from("<Q", blob, len(MAGIC))
    head_start = len(MAGIC) + 8
    head = blob[head_start:head_start + head_len]
    if hashlib.sha256(head).digest() != blob[-32:]:
        raise CheckpointError(path, "header checksum mismatch")
    header = json.loads(head)

    data_start = head_start + head_len
    mask_start = data_start + header["data_bytes"]
    if mask_start + header["mask_bytes"] + 32 != len(blob):
        raise CheckpointError(path, "region sizes do not match the file length")

    params = {}
    for entry in header["tensors"]:
        raw = blob[data_start + entry["offset"]:data_start + entry["offset"] + entry["nbytes"]]
        if hashlib.sha256(raw).hexdigest() != entry["sha256"]:
            raise CheckpointError(path, f"checksum mismatch in tensor {entry['name']!r}")
        params[entry["name"]] = np.frombuffer(raw, dtype=entry["dtype"]).reshape(entry["shape"]).copy()

    mask = None
    if header["mask_rounds"] is not None:
        masks = {}
        for entry in header["masks"]:
            raw = blob[mask_start + entry["offset"]:mask_start + entry["offset"] + entry["nbytes"]]
            if hashlib.sha256(raw).hexdigest() != entry["sha256"]:
                raise CheckpointError(path, f"checksum mismatch in mask {entry['name']!r}")
            m = unpack_mask(raw, tuple(entry["shape"]))
            if int(m.sum()) != entry["popcount"]:
                raise CheckpointError(path, f"popcount mismatch in mask {entry['name']!r}")
            masks[entry["name"]] = m
        mask = PruneMask(masks, header["mask_rounds"], tuple(masks))
    return Checkpoint(params, mask, header["meta"])
