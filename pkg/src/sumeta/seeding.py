"""Deterministic, portable randomness plumbing.

All stochastic stages draw from :class:`random.Random` (Mersenne Twister)
seeded through :func:`derive_seed`, and consume the generator only through
``random()`` - the one primitive whose seeded stream CPython guarantees
stable across versions and platforms. Stage seeds are derived from the root
seed by name (stage, document id, metric ...), so partial re-runs and
parallel workers reproduce byte-identical results.
"""

from __future__ import annotations

import hashlib
import random


def derive_seed(root_seed: int, *parts: str) -> int:
    """Stable 64-bit seed for a named sub-stream of the root seed."""
    material = "|".join([str(root_seed), *parts]).encode("utf-8")
    return int.from_bytes(hashlib.sha256(material).digest()[:8], "big")


def make_rng(root_seed: int, *parts: str) -> random.Random:
    return random.Random(derive_seed(root_seed, *parts))


def rand_index(rng: random.Random, n: int) -> int:
    """Uniform index in [0, n) using only rng.random() (portable stream)."""
    i = int(rng.random() * n)
    return i if i < n else n - 1


def rand_bool(rng: random.Random, p: float) -> bool:
    return rng.random() < p
