"""Named, independently seeded random streams."""
from __future__ import annotations

import zlib

import numpy as np

POPULATION = "population"
PERCEPTION = "perception"
DEMAND = "demand"


class RandomStreams:
    """One numpy Generator per purpose, all derived from a single run seed.

    Each stream is seeded from (seed, crc32(name)), so drawing more from one
    stream never shifts another.
    """

    def __init__(self, seed: int):
        self.seed = seed
        self._streams: dict[str, np.random.Generator] = {}

    def get(self, name: str) -> np.random.Generator:
        stream = self._streams.get(name)
        if stream is None:
            key = zlib.crc32(name.encode("utf-8"))
            stream = np.random.default_rng([self.seed, key])
            self._streams[name] = stream
        return stream

    @property
    def population(self) -> np.random.Generator:
        return self.get(POPULATION)

    @property
    def perception(self) -> np.random.Generator:
        return self.get(PERCEPTION)

    @property
    def demand(self) -> np.random.Generator:
        return self.get(DEMAND)
