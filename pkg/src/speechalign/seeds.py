"""Stable seed derivation for every randomized component.

Python's builtin ``hash`` is salted per process, so anything that must be
reproducible across runs (splits, synthetic encoders, candidate sampling,
dropout) derives its randomness from a keyed blake2b digest instead.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, *parts: str | int) -> int:
    """Derive a sub-seed from a base seed and a sequence of labels.

    Deterministic across processes and platforms; distinct part sequences
    give independent-looking streams.
    """
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    h = hashlib.blake2b(key=key, digest_size=8)
    for part in parts:
        data = str(part).encode("utf-8")
        h.update(len(data).to_bytes(4, "little"))
        h.update(data)
    return int.from_bytes(h.digest(), "little")


def unit_fraction(seed: int, *parts: str | int) -> float:
    """Map (seed, parts) to a uniform-looking value in [0, 1)."""
    return derive_seed(seed, *parts) / 2.0**64


def rng_for(seed: int, *parts: str | int) -> np.random.Generator:
    """Seeded generator for the stream named by ``parts``."""
    return np.random.default_rng(derive_seed(seed, *parts))
