"""CEMB interchange format: writer plus a strict verifying reader.

Byte layout (little-endian): magic "CEMB", version u32=1, kind u8
(0 = sentence vectors, 1 = frame sequences), dim u32, count u32, then per
record [id_len u16][id UTF-8] followed by dim f32 values (kind 0) or
[n_frames u32][n_frames*dim f32] (kind 1). Duplicate ids are invalid.

This implementation is deliberately independent of any consumer of the
format; it is the bridge's side of the contract.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

MAGIC = b"CEMB"
VERSION = 1
KIND_SENTENCE = 0
KIND_FRAMES = 1


class FormatError(ValueError):
    """Malformed CEMB data."""


def write_records(path: str, kind: int, records: list[tuple[str, np.ndarray]]) -> None:
    """Write (id, array) records; arrays are (dim,) for kind 0, (T, dim) for kind 1."""
    if kind not in (KIND_SENTENCE, KIND_FRAMES):
        raise ValueError(f"unknown kind {kind}")
    want_ndim = 1 if kind == KIND_SENTENCE else 2
    dim = 0
    seen: set[str] = set()
    for rec_id, values in records:
        values = np.asarray(values)
        if values.ndim != want_ndim:
            raise ValueError(f"{rec_id}: expected a {want_ndim}-D array for kind {kind}")
        if kind == KIND_FRAMES and values.shape[0] < 1:
            raise ValueError(f"{rec_id}: frame sequences need at least one frame")
        rec_dim = values.shape[-1]
        dim = dim or rec_dim
        if rec_dim != dim:
            raise ValueError(f"{rec_id}: dim {rec_dim} differs from {dim}")
        if rec_id in seen:
            raise ValueError(f"duplicate id {rec_id!r}")
        seen.add(rec_id)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IBII", VERSION, kind, dim, len(records)))
        for rec_id, values in records:
            encoded = rec_id.encode("utf-8")
            if len(encoded) > 0xFFFF:
                raise ValueError(f"id too long: {rec_id[:32]!r}...")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            arr = np.asarray(values, dtype="<f4")
            if kind == KIND_FRAMES:
                fh.write(struct.pack("<I", arr.shape[0]))
            fh.write(arr.tobytes())


def _need(fh: BinaryIO, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"truncated while reading {what}")
    return data


def read_records(path: str) -> tuple[int, int, list[tuple[str, np.ndarray]]]:
    """Parse a CEMB file; returns (kind, dim, records). Strict about structure."""
    with open(path, "rb") as fh:
        if _need(fh, 4, "magic") != MAGIC:
            raise FormatError(f"{path}: bad magic")
        version, kind, dim, count = struct.unpack("<IBII", _need(fh, 13, "header"))
        if version != VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        if kind not in (KIND_SENTENCE, KIND_FRAMES):
            raise FormatError(f"{path}: unknown kind {kind}")
        records: list[tuple[str, np.ndarray]] = []
        seen: set[str] = set()
        for i in range(count):
            (id_len,) = struct.unpack("<H", _need(fh, 2, f"record {i} id length"))
            rec_id = _need(fh, id_len, f"record {i} id").decode("utf-8")
            if rec_id in seen:
                raise FormatError(f"{path}: duplicate id {rec_id!r}")
            seen.add(rec_id)
            if kind == KIND_FRAMES:
                (n_frames,) = struct.unpack("<I", _need(fh, 4, f"{rec_id}: frame count"))
                if n_frames < 1:
                    raise FormatError(f"{path}: {rec_id!r} has zero frames")
                raw = _need(fh, 4 * n_frames * dim, f"{rec_id}: frame data")
                records.append((rec_id, np.frombuffer(raw, dtype="<f4").reshape(n_frames, dim)))
            else:
                raw = _need(fh, 4 * dim, f"{rec_id}: vector data")
                records.append((rec_id, np.frombuffer(raw, dtype="<f4")))
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after {count} records")
    return kind, dim, records
