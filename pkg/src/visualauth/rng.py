"""Deterministic randomness plumbing.

Every random draw in a simulation flows from one scenario seed through
named child streams, so two runs with the same seed produce byte-identical
transcripts. Child seeds are hash-derived; reordering unrelated draws in
one subsystem cannot disturb another.
"""

from __future__ import annotations

import hashlib
import random


def child_seed(seed: int, *path: object) -> int:
    """Derive a child seed from a parent seed and a label path."""
    h = hashlib.sha256()
    h.update(str(seed).encode())
    for part in path:
        h.update(b"/")
        h.update(str(part).encode())
    return int.from_bytes(h.digest()[:8], "big")


def fork(seed: int, *path: object) -> random.Random:
    """A fresh PRNG for the named subsystem, isolated from its siblings."""
    return random.Random(child_seed(seed, *path))


def as_rng(source: random.Random | int) -> random.Random:
    # Accept either an int seed or an already-forked stream.
    if isinstance(source, random.Random):
        return source
    return random.Random(source)
