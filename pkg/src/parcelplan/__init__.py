"""Consensus-based multi-agent RL for participatory land-use readjustment."""

from .agents import (
    ALL_ROLES,
    EXPECTED_BENEFIT,
    Agent,
    AgentRole,
    default_roster,
    expected_benefit,
    greedy_vote,
)
from .graph import (
    ALL_LAND_USES,
    LandUse,
    Parcel,
    SpatialGraph,
    build_knn_graph,
    observation_subgraph,
    parse_parcels,
    select_readjustment_parcels,
    serialize_parcels,
    to_geojson,
)
from .rewards import (
    DEFAULT_TARGET_USES,
    AcceptanceLedger,
    RewardWeights,
    combined_reward,
    density_score,
    diversity_score,
    equity_reward,
    global_reward,
    local_reward,
    self_reward,
)
from .environment import (
    EpisodeState,
    StepOutcome,
    eligible_voters,
    reset,
    step,
    tally_votes,
)
from .training import ReplayBuffer, TrainConfig, Transition, compute_returns, train

__all__ = [
    "ALL_LAND_USES",
    "ALL_ROLES",
    "AcceptanceLedger",
    "Agent",
    "AgentRole",
    "DEFAULT_TARGET_USES",
    "EXPECTED_BENEFIT",
    "EpisodeState",
    "LandUse",
    "Parcel",
    "ReplayBuffer",
    "RewardWeights",
    "SpatialGraph",
    "StepOutcome",
    "TrainConfig",
    "Transition",
    "build_knn_graph",
    "combined_reward",
    "compute_returns",
    "default_roster",
    "density_score",
    "diversity_score",
    "eligible_voters",
    "equity_reward",
    "expected_benefit",
    "global_reward",
    "greedy_vote",
    "local_reward",
    "observation_subgraph",
    "parse_parcels",
    "reset",
    "select_readjustment_parcels",
    "self_reward",
    "serialize_parcels",
    "step",
    "tally_votes",
    "to_geojson",
    "train",
]

__version__ = "0.1.0"
