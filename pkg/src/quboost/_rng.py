"""Deterministic named RNG substreams derived from a single global seed."""
from __future__ import annotations

import hashlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Return an independent generator for ``name``.

    The stream depends only on (seed, name), so any pipeline stage can be
    rerun or reordered without perturbing the randomness of other stages.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    key = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([seed, key]))
