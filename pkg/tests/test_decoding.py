"""Decoding-probability and completion-moment tests.

The reference oracle evaluates the single-receiver completion sum in exact
rational arithmetic (fractions + math.comb), so the recurrence-based
implementation is checked against ground truth, not against itself. Moment
operations are checked against plain truncated sums computed independently.
"""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptnc import (
    ChannelModel,
    CompletionPmf,
    DecodingTable,
    DivergenceError,
    completion_pmf,
    completion_second_moment,
    decode_prob,
    decode_prob_single,
    expected_completion_time,
    immediate_reward,
    max_block_for_variance,
)


def exact_single(block: int, slots: int, erasure: Fraction) -> Fraction:
    """Exact rational evaluation of the single-receiver completion sum."""
    if block == 0:
        return Fraction(1)
    if block > slots:
        return Fraction(0)
    total = Fraction(0)
    for tau in range(block, slots + 1):
        total += (
            math.comb(tau - 1, block - 1)
            * erasure ** (tau - block)
            * (1 - erasure) ** block
        )
    return total


def truncated_mean(block: int, channel: ChannelModel, upto: int) -> float:
    """Independent completion-time mean: K + sum of shortfall probabilities."""
    return block + sum(
        1.0 - decode_prob(block, t, channel) for t in range(block, upto)
    )


def truncated_second_moment(block: int, channel: ChannelModel, upto: int) -> float:
    """Independent second moment via sum_t (2t+1) * P(completion > t)."""
    total = float(block) ** 2
    for t in range(block, upto):
        total += (2 * t + 1) * (1.0 - decode_prob(block, t, channel))
    return total


class TestDecodeProbSingle:
    def test_matches_exact_enumeration(self):
        for eps in (Fraction(0), Fraction(1, 4), Fraction(1, 2), Fraction(9, 10), Fraction(1)):
            for slots in range(0, 11):
                for block in range(0, slots + 3):
                    got = decode_prob_single(block, slots, float(eps))
                    want = float(exact_single(block, slots, eps))
                    assert got == pytest.approx(want, abs=1e-12), (block, slots, eps)

    def test_point_values(self):
        assert decode_prob_single(1, 1, 0.5) == pytest.approx(0.5)
        assert decode_prob_single(2, 3, 0.5) == pytest.approx(0.5)
        assert decode_prob_single(3, 2, 0.7) == 0.0
        assert decode_prob_single(2, 5, 0.0) == 1.0

    def test_difference_identity(self):
        # P(K,T) - P(K-1,T) = -C(T,K-1) eps^(T-K+1) (1-eps)^(K-1), the
        # closed-form step used to prove strict monotonicity in K.
        for eps in np.arange(0.1, 0.95, 0.1):
            for slots in range(1, 31):
                for block in range(1, slots + 1):
                    diff = decode_prob_single(block, slots, eps) - decode_prob_single(
                        block - 1, slots, eps
                    )
                    want = (
                        -math.comb(slots, block - 1)
                        * eps ** (slots - block + 1)
                        * (1 - eps) ** (block - 1)
                    )
                    assert diff == pytest.approx(want, abs=1e-10)

    def test_large_block_stability(self):
        # hundreds of packets: the term recurrence must not overflow or drift
        got = decode_prob_single(300, 700, 0.5)
        assert 0.0 <= got <= 1.0
        # mean successes is 350 >= 300, so the probability is substantial
        assert got > 0.99

    @given(
        block=st.integers(0, 40),
        slots=st.integers(0, 60),
        eps=st.floats(0.0, 1.0, allow_nan=False),
    )
    @settings(deadline=None, derandomize=True)
    def test_always_a_probability(self, block, slots, eps):
        p = decode_prob_single(block, slots, eps)
        assert 0.0 <= p <= 1.0

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            decode_prob_single(1, 1, 1.5)
        with pytest.raises(ValueError):
            decode_prob_single(1, 1, -0.1)
        with pytest.raises(ValueError):
            decode_prob_single(-1, 1, 0.5)
        with pytest.raises(ValueError):
            decode_prob_single(1, -1, 0.5)


class TestDecodeProb:
    def test_independent_receivers_multiply(self):
        ch = ChannelModel.homogeneous(0.5, 2)
        assert decode_prob(1, 1, ch) == pytest.approx(0.25)
        assert decode_prob(1, 2, ChannelModel.homogeneous(0.5, 1)) == pytest.approx(0.75)

    def test_heterogeneous_product(self):
        ch = ChannelModel(erasures=(0.2, 0.5, 0.9))
        want = (
            decode_prob_single(2, 6, 0.2)
            * decode_prob_single(2, 6, 0.5)
            * decode_prob_single(2, 6, 0.9)
        )
        assert decode_prob(2, 6, ch) == pytest.approx(want, rel=1e-12)

    def test_fully_erased_receiver(self):
        ch = ChannelModel(erasures=(0.2, 1.0))
        assert decode_prob(1, 5, ch) == 0.0
        assert decode_prob(3, 9, ch) == 0.0
        assert decode_prob(0, 5, ch) == 1.0

    def test_homogeneous_equals_general_form(self):
        a = ChannelModel.homogeneous(0.3, 4)
        b = ChannelModel(erasures=(0.3, 0.3, 0.3, 0.3))
        for block, slots in [(1, 1), (2, 5), (4, 9)]:
            assert decode_prob(block, slots, a) == decode_prob(block, slots, b)

    def test_monte_carlo_oracle(self):
        # decode within T slots == every receiver scores >= K successes in T
        # independent trials; estimated from one million seeded frames.
        block, slots, eps, n = 2, 6, 0.3, 3
        trials = 1_000_000
        gen = np.random.default_rng(20260814)
        bits = gen.random((trials, slots, n)) < (1.0 - eps)
        hit = (bits.sum(axis=1) >= block).all(axis=1)
        estimate = hit.mean()
        se = math.sqrt(estimate * (1 - estimate) / trials)
        want = decode_prob(block, slots, ChannelModel.homogeneous(eps, n))
        assert abs(estimate - want) < 3 * se


class TestDecodingTable:
    def test_matches_scalar_function(self):
        ch = ChannelModel(erasures=(0.3, 0.6))
        table = DecodingTable(ch, 12)
        for block in range(0, 13):
            for slots in range(0, 13):
                assert table.prob(block, slots) == pytest.approx(
                    decode_prob(block, slots, ch), abs=1e-12
                )

    def test_boundary_rows(self):
        table = DecodingTable(ChannelModel.homogeneous(0.4, 3), 8)
        assert (table.values[0, :] == 1.0).all()
        for block in range(1, 9):
            assert (table.values[block, :block] == 0.0).all()

    def test_monotone_in_block_and_slots(self):
        for eps in (0.1, 0.5, 0.9):
            for n in (1, 2, 5, 10):
                table = DecodingTable(ChannelModel.homogeneous(eps, n), 15)
                v = table.values
                assert (v >= 0.0).all() and (v <= 1.0).all()
                assert (np.diff(v, axis=0) <= 1e-15).all()  # non-increasing in K
                assert (np.diff(v, axis=1) >= -1e-15).all()  # non-decreasing in t
                # strictly decreasing on the feasible triangle
                for t in range(1, 16):
                    col = v[1 : t + 1, t]
                    assert (np.diff(col) < 0).all(), (eps, n, t)

    def test_deltas_telescope(self):
        table = DecodingTable(ChannelModel.homogeneous(0.35, 2), 10)
        rebuilt = np.cumsum(table.deltas, axis=1)
        assert np.allclose(rebuilt, table.values, atol=1e-12)

    def test_reward_and_immutability(self):
        table = DecodingTable(ChannelModel.homogeneous(0.5, 1), 5)
        assert table.reward(2, 3) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            table.values[0, 0] = 0.5

    def test_rejects_negative_horizon(self):
        with pytest.raises(ValueError):
            DecodingTable(ChannelModel.homogeneous(0.5, 1), -1)


class TestCompletionPmf:
    def test_geometric_example(self):
        pmf = completion_pmf(1, 2, ChannelModel.homogeneous(0.5, 1))
        assert pmf.mass[1] == pytest.approx(0.5)  # done at slot 1, one left
        assert pmf.mass[0] == pytest.approx(0.25)  # done at slot 2, none left
        assert pmf.fail == pytest.approx(0.25)

    def test_no_slack_single_atom(self):
        ch = ChannelModel.homogeneous(0.4, 2)
        pmf = completion_pmf(3, 3, ch)
        assert len(pmf.mass) == 1
        assert pmf.mass[0] == pytest.approx(decode_prob(3, 3, ch))
        assert pmf.fail == pytest.approx(1.0 - decode_prob(3, 3, ch))

    def test_telescoping_sum_identity(self):
        ch = ChannelModel.homogeneous(0.3, 3)
        pmf = completion_pmf(2, 6, ch)
        assert pmf.mass.sum() == pytest.approx(decode_prob(2, 6, ch), abs=1e-12)
        assert pmf.total_mass() == pytest.approx(1.0, abs=1e-12)

    def test_mass_identity_on_grid(self):
        for eps in (0.1, 0.5, 0.9):
            for n in (1, 3):
                ch = ChannelModel.homogeneous(eps, n)
                for slots in range(1, 12):
                    for block in range(1, slots + 1):
                        pmf = completion_pmf(block, slots, ch)
                        assert (pmf.mass >= 0.0).all()
                        assert pmf.total_mass() == pytest.approx(1.0, abs=1e-12)
                        assert len(pmf.mass) == slots - block + 1

    def test_rejects_block_outside_range(self):
        ch = ChannelModel.homogeneous(0.5, 1)
        with pytest.raises(ValueError):
            completion_pmf(4, 3, ch)
        with pytest.raises(ValueError):
            completion_pmf(0, 3, ch)


class TestImmediateReward:
    def test_point_values(self):
        ch1 = ChannelModel.homogeneous(0.5, 1)
        assert immediate_reward(2, 3, ch1) == pytest.approx(1.0)
        assert immediate_reward(1, 2, ch1) == pytest.approx(0.75)
        assert immediate_reward(0, 7, ch1) == 0.0

    def test_rejects_block_outside_range(self):
        ch = ChannelModel.homogeneous(0.5, 1)
        with pytest.raises(ValueError):
            immediate_reward(4, 3, ch)
        with pytest.raises(ValueError):
            immediate_reward(-1, 3, ch)


class TestExpectedCompletionTime:
    def test_geometric_closed_form(self):
        for eps in (0.2, 0.5, 0.8):
            ch = ChannelModel.homogeneous(eps, 1)
            assert expected_completion_time(1, ch) == pytest.approx(
                1.0 / (1.0 - eps), abs=1e-6
            )

    def test_lossless_channel(self):
        ch = ChannelModel.homogeneous(0.0, 5)
        assert expected_completion_time(1, ch) == pytest.approx(1.0)
        assert expected_completion_time(4, ch) == pytest.approx(4.0)

    def test_lower_bound_and_truncated_sum(self):
        ch = ChannelModel.homogeneous(0.2, 2)
        got = expected_completion_time(3, ch)
        assert got >= 3.0
        assert got == pytest.approx(truncated_mean(3, ch, 400), abs=1e-6)

    def test_divergent_channel(self):
        with pytest.raises(DivergenceError):
            expected_completion_time(1, ChannelModel(erasures=(0.3, 1.0)))

    def test_rejects_empty_block(self):
        with pytest.raises(ValueError):
            expected_completion_time(0, ChannelModel.homogeneous(0.5, 1))


class TestCompletionSecondMoment:
    def test_geometric_closed_form(self):
        # E[X^2] of a geometric completion: (1+eps)/(1-eps)^2
        ch = ChannelModel.homogeneous(0.5, 1)
        assert completion_second_moment(1, ch) == pytest.approx(6.0, abs=1e-6)
        assert completion_second_moment(
            1, ChannelModel.homogeneous(0.0, 1)
        ) == pytest.approx(1.0)

    def test_grows_with_block_size(self):
        ch = ChannelModel.homogeneous(0.3, 2)
        assert completion_second_moment(2, ch) > completion_second_moment(1, ch)

    def test_truncated_sum_oracle(self):
        ch = ChannelModel.homogeneous(0.3, 2)
        assert completion_second_moment(2, ch) == pytest.approx(
            truncated_second_moment(2, ch, 600), abs=1e-6
        )

    def test_divergent_channel(self):
        with pytest.raises(DivergenceError):
            completion_second_moment(2, ChannelModel(erasures=(1.0,)))


class TestMaxBlockForVariance:
    def test_budget_between_first_two_moments(self):
        # v(1) = 6 < 6.5 while v(2) > 6.5, so exactly one packet fits
        ch = ChannelModel.homogeneous(0.5, 1)
        assert completion_second_moment(2, ch) > 6.5
        assert max_block_for_variance(6.5, ch, ceiling=10) == 1

    def test_budget_below_any_block(self):
        assert max_block_for_variance(0.5, ChannelModel.homogeneous(0.2, 3), ceiling=8) == 0

    def test_inactive_budget_hits_ceiling(self):
        ch = ChannelModel.homogeneous(0.1, 1)
        assert max_block_for_variance(1e9, ch, ceiling=5) == 5

    def test_divergent_channel_fits_nothing(self):
        assert max_block_for_variance(100.0, ChannelModel(erasures=(1.0,)), ceiling=5) == 0

    def test_rejects_negative_ceiling(self):
        with pytest.raises(ValueError):
            max_block_for_variance(5.0, ChannelModel.homogeneous(0.5, 1), ceiling=-1)


class TestChannelModel:
    def test_validation(self):
        with pytest.raises(ValueError):
            ChannelModel(erasures=())
        with pytest.raises(ValueError):
            ChannelModel(erasures=(0.5, 1.2))
        with pytest.raises(ValueError):
            ChannelModel.homogeneous(0.5, 0)

    def test_accessors(self):
        ch = ChannelModel(erasures=(0.1, 0.4))
        assert ch.n_receivers == 2
        assert not ch.is_homogeneous
        assert ch.worst_erasure() == 0.4
        assert ChannelModel.homogeneous(0.3, 3).is_homogeneous
