"""Deterministic random streams derived from a root seed and string tags.

Streams use the counter-based Philox generator keyed by a hash of the seed and
tags, so results do not depend on call order or worker scheduling.
"""
from __future__ import annotations

import hashlib

import numpy as np


def derive_key(seed: int, *tags: str) -> int:
    payload = "|".join([str(seed), *tags]).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(payload, digest_size=16).digest(), "little")


def rng_for(seed: int, *tags: str) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=derive_key(seed, *tags)))
