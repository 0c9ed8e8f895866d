"""Named, independent random streams derived from one master seed.

Each concern (policy decisions, audit lottery, return sampling, dispute
adjudication, strategy generation) draws from its own PCG64 stream, so
reordering or adding draws in one concern can never shift another —
in particular agent policies cannot predict or bias audit selection.
Per-strategy audit substreams are split off the audit stream index.
"""

from __future__ import annotations

import numpy as np

STREAMS = ("policy", "audit", "returns", "disputes", "strategies")


class StreamRegistry:
    def __init__(self, seed: int):
        self.seed = seed
        self._gens = {
            name: np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(i,))))
            for i, name in enumerate(STREAMS)
        }

    def get(self, name: str) -> np.random.Generator:
        return self._gens[name]

    def substream(self, name: str, index: int) -> np.random.Generator:
        """Independent child stream, e.g. one audit schedule per strategy."""
        base = STREAMS.index(name)
        ss = np.random.SeedSequence(self.seed, spawn_key=(base, index))
        return np.random.Generator(np.random.PCG64(ss))
