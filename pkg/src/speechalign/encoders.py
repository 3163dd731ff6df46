"""Sentence-level embeddings: pooling, synthetic test encoders, CEMB file I/O.

Real pretrained backbones never run here. They enter as CEMB interchange
files produced externally; the deterministic synthetic encoders below stand
in for them in tests and desk-scale runs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, Sequence

import numpy as np

from .seeds import rng_for

CEMB_MAGIC = b"CEMB"
CEMB_VERSION = 1
KIND_SENTENCE = 0
KIND_FRAMES = 1


class FormatError(ValueError):
    """Raised for malformed interchange or checkpoint files."""


@dataclass
class FrameEmbeddings:
    """Frame-level features for one utterance: (T, d_ssl) with T >= 1."""

    id: str
    frames: np.ndarray

    def __post_init__(self) -> None:
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise ValueError(f"{self.id}: frames must be a (T, d) matrix with T >= 1")


@dataclass
class SentenceEmbedding:
    """One fixed-size vector per sentence, speech- or text-side."""

    id: str
    vector: np.ndarray
    modality: str = "speech"

    def __post_init__(self) -> None:
        self.vector = np.asarray(self.vector, dtype=np.float64)
        if self.vector.ndim != 1:
            raise ValueError(f"{self.id}: vector must be one-dimensional")
        if not np.all(np.isfinite(self.vector)):
            raise ValueError(f"{self.id}: vector entries must be finite")
        if self.modality not in ("speech", "text"):
            raise ValueError(f"{self.id}: unknown modality {self.modality!r}")


def mean_pool(fe: FrameEmbeddings) -> SentenceEmbedding:
    """Average the frame vectors into one sentence vector."""
    if fe.frames.shape[0] < 1:
        raise ValueError(f"{fe.id}: cannot pool an empty frame sequence")
    return SentenceEmbedding(id=fe.id, vector=fe.frames.mean(axis=0), modality="speech")


def _token_vector(token: str, seed: int, dim: int) -> np.ndarray:
    v = rng_for(seed, "synthetic-token", token).standard_normal(dim)
    return v / np.linalg.norm(v)


def _text_space_rotation(seed: int, dim: int) -> np.ndarray:
    """Seeded random rotation separating the synthetic text space from the
    speech space.

    Mirrors the real setting: both encoders carry the same token semantics,
    but in different bases, so alignment is a learnable map rather than the
    identity.
    """
    gauss = rng_for(seed, "text-rotation", dim).standard_normal((dim, dim))
    q, r = np.linalg.qr(gauss)
    return q * np.sign(np.diag(r))


def synthetic_frames(text: str, seed: int, d_ssl: int) -> FrameEmbeddings:
    """Deterministic stand-in for a pretrained speech encoder.

    One frame per whitespace token; each token maps to a fixed unit vector
    derived from (token, seed), so identical inputs always reproduce the
    same matrix.
    """
    tokens = text.split()
    if not tokens:
        raise ValueError("cannot encode empty text")
    frames = np.stack([_token_vector(tok, seed, d_ssl) for tok in tokens])
    return FrameEmbeddings(id="", frames=frames)


def synthetic_text_embedding(text: str, seed: int, d: int) -> SentenceEmbedding:
    """Deterministic stand-in for the frozen text encoder.

    Token vectors are the rotated counterparts of the speech-side vectors,
    mean-pooled into one sentence vector.
    """
    tokens = text.split()
    if not tokens:
        raise ValueError("cannot encode empty text")
    rotation = _text_space_rotation(seed, d)
    vecs = np.stack([rotation @ _token_vector(tok, seed, d) for tok in tokens])
    return SentenceEmbedding(id="", vector=vecs.mean(axis=0), modality="text")


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"truncated file while reading {what}")
    return data


def write_cemb(
    path: str,
    records: Sequence[FrameEmbeddings] | Sequence[SentenceEmbedding],
    kind: int | None = None,
) -> None:
    """Write embedding records in the CEMB binary interchange format.

    The kind is inferred from the record types; pass it explicitly only for
    an empty collection. Mixed record types or duplicate ids are errors.
    """
    records = list(records)
    if kind is None:
        if not records:
            raise ValueError("kind must be given explicitly for an empty collection")
        kind = KIND_FRAMES if isinstance(records[0], FrameEmbeddings) else KIND_SENTENCE
    if kind not in (KIND_SENTENCE, KIND_FRAMES):
        raise ValueError(f"unknown CEMB kind {kind}")
    expected_type = FrameEmbeddings if kind == KIND_FRAMES else SentenceEmbedding
    seen: set[str] = set()
    dim: int | None = None
    for rec in records:
        if not isinstance(rec, expected_type):
            raise ValueError(
                f"record {rec.id!r} is a {type(rec).__name__}, which does not match kind {kind}"
            )
        rec_dim = rec.frames.shape[1] if kind == KIND_FRAMES else rec.vector.shape[0]
        if dim is None:
            dim = rec_dim
        elif rec_dim != dim:
            raise ValueError(f"record {rec.id!r} has dim {rec_dim}, expected {dim}")
        if rec.id in seen:
            raise ValueError(f"duplicate id {rec.id!r}")
        seen.add(rec.id)
    if dim is None:
        dim = 0
    with open(path, "wb") as fh:
        fh.write(CEMB_MAGIC)
        fh.write(struct.pack("<IBII", CEMB_VERSION, kind, dim, len(records)))
        for rec in records:
            id_bytes = rec.id.encode("utf-8")
            if len(id_bytes) > 0xFFFF:
                raise ValueError(f"id too long: {rec.id[:32]!r}...")
            fh.write(struct.pack("<H", len(id_bytes)))
            fh.write(id_bytes)
            if kind == KIND_FRAMES:
                fh.write(struct.pack("<I", rec.frames.shape[0]))
                fh.write(rec.frames.astype("<f4").tobytes())
            else:
                fh.write(rec.vector.astype("<f4").tobytes())


def read_cemb(path: str, modality: str = "speech") -> list[FrameEmbeddings] | list[SentenceEmbedding]:
    """Read a CEMB file back into records (values are exactly the stored f32s)."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != CEMB_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        version, kind, dim, count = struct.unpack("<IBII", _read_exact(fh, 13, "header"))
        if version != CEMB_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        if kind not in (KIND_SENTENCE, KIND_FRAMES):
            raise FormatError(f"{path}: unknown kind {kind}")
        records: list = []
        seen: set[str] = set()
        for i in range(count):
            (id_len,) = struct.unpack("<H", _read_exact(fh, 2, f"record {i} id length"))
            rec_id = _read_exact(fh, id_len, f"record {i} id").decode("utf-8")
            if rec_id in seen:
                raise FormatError(f"{path}: duplicate id {rec_id!r}")
            seen.add(rec_id)
            if kind == KIND_FRAMES:
                (n_frames,) = struct.unpack("<I", _read_exact(fh, 4, f"{rec_id}: frame count"))
                if n_frames < 1:
                    raise FormatError(f"{path}: record {rec_id!r} has zero frames")
                raw = _read_exact(fh, 4 * n_frames * dim, f"{rec_id}: frame data")
                frames = np.frombuffer(raw, dtype="<f4").reshape(n_frames, dim)
                records.append(FrameEmbeddings(id=rec_id, frames=frames))
            else:
                raw = _read_exact(fh, 4 * dim, f"{rec_id}: vector data")
                vector = np.frombuffer(raw, dtype="<f4")
                records.append(SentenceEmbedding(id=rec_id, vector=vector, modality=modality))
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after {count} records")
    return records


def as_vector_table(records: Sequence[SentenceEmbedding]) -> dict[str, np.ndarray]:
    """Map id -> vector for a sentence-embedding collection."""
    return {rec.id: rec.vector for rec in records}
