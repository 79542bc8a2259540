"""Named random sub-streams.

Each consumer (``"data"``, ``"init"``, ``"noise"``, ...) draws from its own
PCG64 generator seeded by ``SeedSequence([seed, crc32(name)])``, so adding a
consumer never shifts the numbers another consumer sees.
"""
from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, name: str) -> np.random.Generator:
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), key])))
