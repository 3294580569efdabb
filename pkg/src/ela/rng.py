"""Seeding helpers.

All randomness in the package flows from a single integer master seed
through named substreams, so that individual pipeline stages can be rerun
independently and still reproduce byte-identical outputs.
"""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.SeedSequence:
    """Derive a named, order-independent child seed from a master seed."""
    return np.random.SeedSequence([int(seed), zlib.crc32(name.encode("utf-8"))])


def generator(seed: int, name: str) -> np.random.Generator:
    """A fresh PCG64 generator on the named substream."""
    return np.random.default_rng(substream(seed, name))
