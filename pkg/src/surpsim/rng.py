"""Deterministic, scheduling-independent random substreams.

Streams are counter-based (Philox) and keyed by hashed parts, so any worker
computing the same (seed, context, N, L) cell draws the same numbers no
matter how work is distributed over threads or processes.
"""

from __future__ import annotations

import hashlib
from typing import Iterable

import numpy as np


def _part_bytes(part) -> bytes:
    if isinstance(part, bytes):
        return part
    if isinstance(part, str):
        return part.encode("utf-8")
    if isinstance(part, (int, np.integer)):
        return str(int(part)).encode("ascii")
    if isinstance(part, (tuple, list)):
        h = hashlib.blake2b(digest_size=8)
        for p in part:
            h.update(_part_bytes(p))
            h.update(b"\x1f")
        return h.digest()
    raise TypeError(f"cannot derive a stream key from {type(part).__name__}")


def digest64(*parts) -> int:
    """Stable 64-bit digest of the given parts."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(_part_bytes(p))
        h.update(b"\x1e")
    return int.from_bytes(h.digest(), "big")


def substream(*parts) -> np.random.Generator:
    """A fresh generator keyed by the given parts."""
    entropy = [digest64(p) for p in parts]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def context_key(tokens: Iterable[str]) -> int:
    """Stream-key component identifying a context token string."""
    return digest64(tuple(tokens))
