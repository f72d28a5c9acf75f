"""Block-size policies and scheduling for coded broadcast under deadlines."""

from .channel import ChannelModel
from .config import (
    ChannelConfig,
    ExperimentConfig,
    FlowConfig,
    PolicyConfig,
    config_digest,
    load_config,
    parse_config,
    serialize_config,
)
from .decoding import (
    CompletionPmf,
    DecodingTable,
    completion_pmf,
    completion_second_moment,
    decode_prob,
    decode_prob_single,
    expected_completion_time,
    immediate_reward,
    max_block_for_variance,
)
from .errors import ConfigError, DivergenceError, InvariantViolation
from .multiflow import (
    DeficitState,
    FlowSpec,
    MultiflowTrace,
    RegionMap,
    ServiceCurve,
    StaticDualTrace,
    allocate_slots,
    deficit_slope,
    rate_region_sweep,
    run_online,
    service_curve,
    static_dual_iteration,
    thinned_arrivals,
    update_deficit,
)
from .policies import (
    BlockPolicy,
    ConservativePolicy,
    GreedyPolicy,
    LearnerState,
    LearningPolicy,
    OptimalPolicy,
    RetransmissionPolicy,
    VarianceConstrainedPolicy,
    make_policy,
)
from .rng import RngSpec, frame_bits
from .simulate import (
    FrameTrace,
    ThroughputSummary,
    learning_run,
    monte_carlo_throughput,
    rescore_trace,
    simulate_frame,
    variance_tradeoff_run,
)
from .solver import (
    PolicyTable,
    conservative_block_size,
    greedy_block_size,
    retransmission_threshold,
    solve_bruteforce,
    solve_monotone,
)

__version__ = "0.1.0"

__all__ = [
    "BlockPolicy",
    "ChannelConfig",
    "ChannelModel",
    "CompletionPmf",
    "ConfigError",
    "ConservativePolicy",
    "DecodingTable",
    "DeficitState",
    "DivergenceError",
    "ExperimentConfig",
    "FlowConfig",
    "FlowSpec",
    "FrameTrace",
    "GreedyPolicy",
    "InvariantViolation",
    "LearnerState",
    "LearningPolicy",
    "MultiflowTrace",
    "OptimalPolicy",
    "PolicyConfig",
    "PolicyTable",
    "RegionMap",
    "RetransmissionPolicy",
    "RngSpec",
    "ServiceCurve",
    "StaticDualTrace",
    "ThroughputSummary",
    "VarianceConstrainedPolicy",
    "allocate_slots",
    "completion_pmf",
    "completion_second_moment",
    "config_digest",
    "conservative_block_size",
    "decode_prob",
    "decode_prob_single",
    "deficit_slope",
    "expected_completion_time",
    "frame_bits",
    "greedy_block_size",
    "immediate_reward",
    "learning_run",
    "load_config",
    "make_policy",
    "max_block_for_variance",
    "monte_carlo_throughput",
    "parse_config",
    "rate_region_sweep",
    "rescore_trace",
    "retransmission_threshold",
    "run_online",
    "serialize_config",
    "service_curve",
    "simulate_frame",
    "solve_bruteforce",
    "solve_monotone",
    "static_dual_iteration",
    "thinned_arrivals",
    "update_deficit",
    "variance_tradeoff_run",
    "__version__",
]
