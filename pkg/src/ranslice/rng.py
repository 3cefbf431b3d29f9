"""Named random streams derived from the three run seeds.

Every consumer asks the registry for a stream by name, so adding a new
consumer never shifts the draws seen by another one.
"""
from __future__ import annotations

import zlib

import numpy as np

ROOTS = ("scenario", "agent", "trace")


class RngRegistry:
    def __init__(self, scenario: int = 0, agent: int = 0, trace: int = 0):
        self.seeds = {"scenario": int(scenario), "agent": int(agent), "trace": int(trace)}
        self._issued = {}

    def stream(self, root: str, name: str) -> np.random.Generator:
        if root not in self.seeds:
            raise KeyError(f"unknown seed root {root!r}; expected one of {ROOTS}")
        key = (root, name)
        if key in self._issued:
            raise RuntimeError(f"stream {root}/{name} already issued")
        gen = np.random.default_rng([self.seeds[root], zlib.crc32(name.encode())])
        self._issued[key] = gen
        return gen

    def seed_for(self, root: str, name: str) -> int:
        """Integer seed for APIs that take a seed rather than a generator."""
        return int(np.random.default_rng([self.seeds[root], zlib.crc32(name.encode())]).integers(2 ** 31))
