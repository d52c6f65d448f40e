"""Named, independent random streams derived from one root seed."""

from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, name: str) -> np.random.Generator:
    """Generator for ``name``; the same ``(seed, name)`` always gives the same draws."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))


class Streams:
    """Lazily created generators, one per purpose (env, mask, gumbel, init, ...)."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gens: dict[str, np.random.Generator] = {}

    def __getitem__(self, name: str) -> np.random.Generator:
        gen = self._gens.get(name)
        if gen is None:
            gen = self._gens[name] = stream(self.seed, name)
        return gen

    def state(self) -> dict:
        return {name: g.bit_generator.state for name, g in self._gens.items()}

    def restore(self, state: dict):
        for name, st in state.items():
            self[name].bit_generator.state = st
