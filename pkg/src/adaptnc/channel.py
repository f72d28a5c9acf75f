"""Broadcast erasure channel description.

One sender, ``n`` receivers. Each transmitted packet is erased at receiver i
independently with probability ``erasures[i]``, independently across slots.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class ChannelModel:
    """Per-receiver erasure probabilities of a broadcast channel."""

    erasures: tuple[float, ...]

    def __post_init__(self):
        if len(self.erasures) == 0:
            raise ValueError("channel needs at least one receiver")
        object.__setattr__(self, "erasures", tuple(float(e) for e in self.erasures))
        for i, e in enumerate(self.erasures):
            if not 0.0 <= e <= 1.0:
                raise ValueError(f"erasure probability {e} of receiver {i} outside [0, 1]")

    @classmethod
    def homogeneous(cls, erasure: float, n_receivers: int) -> "ChannelModel":
        """Channel with ``n_receivers`` identical erasure probabilities."""
        if n_receivers < 1:
            raise ValueError("n_receivers must be at least 1")
        return cls((float(erasure),) * n_receivers)

    @property
    def n_receivers(self) -> int:
        return len(self.erasures)

    @property
    def is_homogeneous(self) -> bool:
        return len(set(self.erasures)) == 1

    def worst_erasure(self) -> float:
        return max(self.erasures)
