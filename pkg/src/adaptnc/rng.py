"""Counter-based random number plumbing.

Every random draw in the package comes from a Philox generator keyed by
(seed, stream). A frame's channel matrix is one ``random((T, N))`` call on
such a generator, so the bit consumed for (slot, receiver) is a pure function
of (seed, stream, slot, receiver): replications can run in any order, split
across processes, or be replayed one at a time, and the traces never change.
"""

from dataclasses import dataclass

import numpy as np

_U64 = np.uint64


@dataclass(frozen=True)
class RngSpec:
    """Key of one reproducible random stream."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if not 0 <= self.stream < 2**64:
            raise ValueError("stream must fit in 64 bits")

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream], dtype=_U64)
        return np.random.Generator(np.random.Philox(key=key))

    def shifted(self, offset: int) -> "RngSpec":
        return RngSpec(self.seed, (self.stream + offset) % 2**64)


def frame_bits(rng: RngSpec, horizon: int, erasures) -> np.ndarray:
    """(horizon, n_receivers) reception indicators for one frame.

    Entry [s, i] is True when receiver i gets the packet sent in the frame's
    s-th slot. Drawn in one call so the channel realization is independent of
    the policy driving the frame.
    """
    u = rng.generator().random((horizon, len(erasures)))
    return u < (1.0 - np.asarray(erasures))
