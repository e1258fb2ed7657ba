"""Portable seeded randomness.

Every random choice in the pipeline flows through a Mersenne Twister
(`random.Random`) seeded from a 64-bit value derived by hashing the run
seed together with a context label. Child seeds are therefore independent
of call order and of each other, and identical on every platform.
"""

from __future__ import annotations

import hashlib
import random
from typing import Iterable, TypeVar

T = TypeVar("T")


def derive_seed(root_seed: int, *context: object) -> int:
    """Derive a 64-bit child seed from a root seed and a context path."""
    digest = hashlib.sha256()
    digest.update(str(int(root_seed)).encode("utf-8"))
    for part in context:
        digest.update(b"\x1f")
        digest.update(str(part).encode("utf-8"))
    return int.from_bytes(digest.digest()[:8], "big")


def seeded_shuffle(items: Iterable[T], seed: int) -> list[T]:
    """Return a new list with a deterministic shuffle of `items`."""
    out = list(items)
    random.Random(seed).shuffle(out)
    return out
