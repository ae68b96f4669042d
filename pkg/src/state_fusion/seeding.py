"""Named sub-seed derivation.

Every random stream in the pipeline hangs off a single run seed through a
named channel ("world", "init", "shuffle", ...), so reruns are byte-stable
and adding a new stream never perturbs existing ones.
"""

from __future__ import annotations

import hashlib

import numpy as np


def subseed(seed: int, name: str) -> int:
    """Derive a 63-bit child seed from (seed, name).

    Uses sha256 rather than hash() so the mapping is stable across Python
    processes and versions.
    """
    digest = hashlib.sha256(f"{seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def rng_for(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(subseed(seed, name))
