"""One run seed, many named substreams."""

import zlib

import numpy as np


def rng_for(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named stage, derived from the run seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))
