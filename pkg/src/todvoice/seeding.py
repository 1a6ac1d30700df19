"""Stable, process-independent seeding.

Python's builtin hash() is salted per process, so derived seeds go through
sha256: identical inputs give identical streams on any machine, any worker.
"""

from __future__ import annotations

import hashlib
import random


def stable_seed(*parts: object) -> int:
    key = ":".join(str(p) for p in parts)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def rng_for(*parts: object) -> random.Random:
    return random.Random(stable_seed(*parts))
