"""Seed-derived random streams.

Every consumer of randomness pulls from its own stream so that, e.g.,
changing the dropout rate never shifts the shuffle order. Sub-keys:

    init      0   parameter initialization
    dropout   1   dropout masks
    noise     2   Gaussian noise layer
    shuffle   3   per-epoch batch order
    split     4   train/test partition
    balance   5   class down-sampling at ingest
    lime      6   perturbation sampling
    synth     7   synthetic corpus generation
"""
from __future__ import annotations

import numpy as np

SUBKEYS = {
    "init": 0,
    "dropout": 1,
    "noise": 2,
    "shuffle": 3,
    "split": 4,
    "balance": 5,
    "lime": 6,
    "synth": 7,
}


def stream(seed: int, name: str) -> np.random.Generator:
    """A fresh generator for one named purpose; same (seed, name) -> same stream."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(SUBKEYS[name],))
    return np.random.Generator(np.random.PCG64(ss))


class SeededRng:
    """Lazily created, stateful streams for one run."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def __getitem__(self, name: str) -> np.random.Generator:
        if name not in self._streams:
            self._streams[name] = stream(self.seed, name)
        return self._streams[name]

    @property
    def init(self) -> np.random.Generator:
        return self["init"]

    @property
    def dropout(self) -> np.random.Generator:
        return self["dropout"]

    @property
    def noise(self) -> np.random.Generator:
        return self["noise"]

    @property
    def shuffle(self) -> np.random.Generator:
        return self["shuffle"]
