"""Decoding probabilities and completion-time statistics for coded blocks.

A block of K coded packets is broadcast one packet per slot, one slot per
packet, until every receiver has collected K of them (random linear coding
makes every reception useful, so a receiver only needs a count). The core
quantity is the probability that a block of size K finishes within a given
number of slots; everything else here (completion distributions, reward,
moments) derives from it.

The single-receiver probability is a negative-binomial tail evaluated with a
multiplicative term recurrence, never with raw factorials, so it stays stable
for block sizes in the hundreds.
"""

from dataclasses import dataclass

import numpy as np

from .channel import ChannelModel
from .errors import DivergenceError

# Hard cap on series length for the moment sums. Generous for any channel a
# frame-level deadline makes sense on; hit only for erasure rates so close to
# one that the moments are astronomically large.
_MAX_SERIES_SLOTS = 5_000_000


def decode_prob_single(block: int, slots: int, erasure: float) -> float:
    """Probability one receiver collects ``block`` packets within ``slots``.

    Sum over the slot index of the first moment the count hits ``block``:
    C(tau-1, block-1) * erasure**(tau-block) * (1-erasure)**block for tau from
    ``block`` to ``slots``. Terms are chained by
    term(tau+1) = term(tau) * erasure * tau / (tau - block + 1).
    """
    if not 0.0 <= erasure <= 1.0:
        raise ValueError(f"erasure probability {erasure} outside [0, 1]")
    if block < 0 or slots < 0:
        raise ValueError("block and slots must be non-negative")
    if block == 0:
        return 1.0
    if block > slots:
        return 0.0
    term = (1.0 - erasure) ** block
    total = term
    for tau in range(block, slots):
        term *= erasure * tau / (tau - block + 1)
        total += term
    return min(total, 1.0)


def decode_prob(block: int, slots: int, channel: ChannelModel) -> float:
    """Probability every receiver decodes a ``block``-packet block in ``slots``.

    Receivers are independent, so this is the product of the per-receiver
    probabilities. Identical erasure rates are grouped into one power.
    """
    if block == 0:
        return 1.0
    prob = 1.0
    for eps in set(channel.erasures):
        count = channel.erasures.count(eps)
        prob *= decode_prob_single(block, slots, eps) ** count
    return prob


def _single_receiver_table(erasure: float, horizon: int) -> np.ndarray:
    """(horizon+1, horizon+1) array of decode_prob_single(k, t, erasure)."""
    T = horizon
    P = np.zeros((T + 1, T + 1))
    P[0, :] = 1.0
    for k in range(1, T + 1):
        first = (1.0 - erasure) ** k
        taus = np.arange(k, T, dtype=float)
        if taus.size:
            ratios = erasure * taus / (taus - k + 1.0)
            terms = first * np.concatenate(([1.0], np.cumprod(ratios)))
        else:
            terms = np.array([first])
        P[k, k:] = np.minimum(np.cumsum(terms), 1.0)
    return P


class DecodingTable:
    """All block decode probabilities of one channel up to a slot horizon.

    ``values[k, t]`` is decode_prob(k, t, channel) for 0 <= k, t <= horizon,
    with values[0, :] = 1 and values[k, t] = 0 for k > t. ``deltas[k, t]``
    holds values[k, t] - values[k, t-1], the probability the block completes
    exactly at slot t; both arrays are frozen after construction.
    """

    def __init__(self, channel: ChannelModel, horizon: int):
        if horizon < 0:
            raise ValueError("horizon must be non-negative")
        self.channel = channel
        self.horizon = horizon
        values = np.ones((horizon + 1, horizon + 1))
        for eps in set(channel.erasures):
            count = channel.erasures.count(eps)
            values *= _single_receiver_table(eps, horizon) ** count
        deltas = np.empty_like(values)
        deltas[:, 0] = values[:, 0]
        deltas[:, 1:] = values[:, 1:] - values[:, :-1]
        values.flags.writeable = False
        deltas.flags.writeable = False
        self.values = values
        self.deltas = deltas

    def prob(self, block: int, slots: int) -> float:
        return float(self.values[block, slots])

    def reward(self, block: int, slots: int) -> float:
        """Expected packets delivered by committing ``block`` at ``slots`` left."""
        return block * float(self.values[block, slots])


@dataclass(frozen=True)
class CompletionPmf:
    """Distribution of slots left over after a block finishes (or does not).

    ``mass[j]`` is the probability the block completes with exactly j slots of
    the frame remaining, for j = 0 .. horizon-block; ``fail`` is the
    probability it never completes inside the frame.
    """

    block: int
    horizon: int
    mass: np.ndarray
    fail: float

    def total_mass(self) -> float:
        return float(self.mass.sum() + self.fail)


def completion_pmf(block: int, slots: int, channel: ChannelModel) -> CompletionPmf:
    """Completion distribution of a ``block``-packet block started with ``slots`` left."""
    if block < 1 or block > slots:
        raise ValueError(f"block {block} outside 1..{slots}")
    row = np.empty(slots + 1)
    for t in range(slots + 1):
        row[t] = decode_prob(block, t, channel)
    j = np.arange(slots - block + 1)
    mass = row[slots - j] - row[slots - j - 1]
    mass = np.maximum(mass, 0.0)
    mass.flags.writeable = False
    return CompletionPmf(block=block, horizon=slots, mass=mass, fail=float(1.0 - row[slots]))


def immediate_reward(block: int, slots: int, channel: ChannelModel) -> float:
    """Expected packets delivered by a single block decision, ignoring reuse
    of leftover slots: block * decode_prob(block, slots, channel). A block of
    zero packets delivers nothing."""
    if block < 0 or block > slots:
        raise ValueError(f"block {block} outside 0..{slots}")
    if block == 0:
        return 0.0
    return block * decode_prob(block, slots, channel)


class _TailState:
    """Per-receiver running decode probabilities for the moment series.

    Advances decode_prob_single(k, t, eps_i) for all receivers at once via the
    term recurrence, and provides a geometric bound on the remaining series
    mass once the per-slot ratio bound drops below one.
    """

    def __init__(self, block: int, channel: ChannelModel):
        self.k = block
        self.eps = np.array(channel.erasures)
        self.term = (1.0 - self.eps) ** block  # exact-completion term at t
        self.phat = self.term.copy()  # per-receiver decode prob at t
        self.t = block

    def advance(self):
        self.term *= self.eps * self.t / (self.t - self.k + 1)
        self.phat = np.minimum(self.phat + self.term, 1.0)
        self.t += 1

    def all_decoded_shortfall(self) -> float:
        """1 - P(all receivers decoded by t)."""
        return float(1.0 - np.prod(self.phat))

    def ratio_bound(self) -> float:
        """r with shortfall(t+1) <= r * shortfall(t) per receiver, if r < 1."""
        return float(np.max(self.eps) * (self.t + 1) / (self.t + 2 - self.k))

    def tail_linear(self) -> float:
        """Upper bound on sum_{s>t} shortfall(s) via the union bound."""
        r = self.eps * (self.t + 1) / (self.t + 2 - self.k)
        miss = 1.0 - self.phat
        return float(np.sum(miss * r / (1.0 - r)))

    def tail_weighted(self) -> float:
        """Upper bound on sum_{s>t} (2s+1) * shortfall(s)."""
        r = self.eps * (self.t + 1) / (self.t + 2 - self.k)
        miss = 1.0 - self.phat
        geo = r / (1.0 - r)
        return float(np.sum(miss * ((2 * self.t + 1) * geo + 2 * geo / (1.0 - r))))


def _check_moment_args(block: int, channel: ChannelModel):
    if block < 1:
        raise ValueError("block must be at least 1")
    if any(e >= 1.0 for e in channel.erasures):
        raise DivergenceError(
            "a receiver with erasure probability 1 never completes a block"
        )


def expected_completion_time(block: int, channel: ChannelModel, tol: float = 1e-9) -> float:
    """Mean number of slots until every receiver decodes a ``block`` block.

    Evaluated as block + sum over t >= block of the shortfall probability
    1 - decode_prob(block, t, channel). The series is truncated once the
    shortfall drops below ``tol`` and a valid geometric tail bound exists; the
    bound is added so the truncation never biases the result low.
    """
    _check_moment_args(block, channel)
    state = _TailState(block, channel)
    total = float(block)
    while True:
        u = state.all_decoded_shortfall()
        total += u
        if u < tol and state.ratio_bound() < 1.0:
            return total + state.tail_linear()
        if state.t - block > _MAX_SERIES_SLOTS:
            raise DivergenceError(
                f"completion-time series did not reach tol={tol} within "
                f"{_MAX_SERIES_SLOTS} slots"
            )
        state.advance()


def completion_second_moment(block: int, channel: ChannelModel, tol: float = 1e-9) -> float:
    """Second moment of the block completion time, in slots squared.

    Uses E[X^2] = sum_{t>=0} (2t+1) P(X > t), truncated like
    expected_completion_time with a weighted geometric tail bound.
    """
    _check_moment_args(block, channel)
    state = _TailState(block, channel)
    total = float(block) ** 2
    while True:
        u = state.all_decoded_shortfall()
        total += (2 * state.t + 1) * u
        if (2 * state.t + 1) * u < tol and state.ratio_bound() < 1.0:
            return total + state.tail_weighted()
        if state.t - block > _MAX_SERIES_SLOTS:
            raise DivergenceError(
                f"second-moment series did not reach tol={tol} within "
                f"{_MAX_SERIES_SLOTS} slots"
            )
        state.advance()


def max_block_for_variance(
    sigma2: float, channel: ChannelModel, ceiling: int, tol: float = 1e-9
) -> int:
    """Largest block size whose completion second moment stays below sigma2.

    Returns 0 when even a single-packet block violates the bound (including
    channels where the moment diverges). The second moment grows with the
    block size, so the scan stops at the first violation.
    """
    if ceiling < 0:
        raise ValueError("ceiling must be non-negative")
    best = 0
    for k in range(1, ceiling + 1):
        try:
            v = completion_second_moment(k, channel, tol)
        except DivergenceError:
            return best
        if not v < sigma2:
            return best
        best = k
    return best
