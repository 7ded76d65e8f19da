"""Adaptive recoding and time-efficiency analysis for a two-hop wireless
relay network in which the sink also overhears the source directly."""

from .channel import (
    ChannelSpec,
    DomainError,
    RankEnvironment,
    build_environment,
    expected_rank,
    expected_rank_exact,
    innovative_rank_distribution,
    marginal_gain,
    overheard_rank_mean,
)
from .idle import (
    IdleModel,
    SendCountDistribution,
    idle_time_markov,
    idle_time_monte_carlo,
    q_step,
    send_count_distribution,
)
from .optimizer import (
    EfficiencyPoint,
    OptimizationResult,
    Segment,
    efficiency_e1,
    efficiency_e2,
    grid_search,
    optimize,
    segment_endpoints,
    solve_upper_bound,
)
from .recoding import (
    GreedyState,
    RecodingScheme,
    brute_force_recoding,
    sink_rank,
    solve_recoding,
)
from .simulator import (
    BatchTrace,
    EfficiencySummary,
    TransferReport,
    empirical_efficiency_batch,
    simulate_transfer,
    transfer_until_rank,
)

__version__ = "1.0.0"

__all__ = [
    "BatchTrace",
    "ChannelSpec",
    "DomainError",
    "EfficiencyPoint",
    "EfficiencySummary",
    "GreedyState",
    "IdleModel",
    "OptimizationResult",
    "RankEnvironment",
    "RecodingScheme",
    "Segment",
    "SendCountDistribution",
    "TransferReport",
    "brute_force_recoding",
    "build_environment",
    "efficiency_e1",
    "efficiency_e2",
    "empirical_efficiency_batch",
    "expected_rank",
    "expected_rank_exact",
    "grid_search",
    "innovative_rank_distribution",
    "idle_time_markov",
    "idle_time_monte_carlo",
    "marginal_gain",
    "optimize",
    "overheard_rank_mean",
    "q_step",
    "segment_endpoints",
    "send_count_distribution",
    "simulate_transfer",
    "sink_rank",
    "solve_recoding",
    "solve_upper_bound",
    "transfer_until_rank",
]
