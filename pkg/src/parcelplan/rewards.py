"""The four reward tiers and their weighted combination.

Per-agent rewards stack a self-interest term (benefit-table lookup), a
novelty-damped local term, a district-wide term (target-use density plus
Shannon diversity of the land-use mix), and an equity term derived from
how decision acceptance spreads over stakeholder groups.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

from .agents import ALL_ROLES, PROFESSIONAL_ROLES, RESIDENT_ROLES, AgentRole, expected_benefit
from .errors import DomainError, ValidationError
from .graph import ALL_LAND_USES, LandUse, SpatialGraph

# Default planning targets: green and commercial density drives the
# sustainability side of the district reward.
DEFAULT_TARGET_USES = frozenset({LandUse.GREEN, LandUse.COMMERCIAL})


@dataclass(frozen=True)
class RewardWeights:
    """Non-negative mixing weights for the four reward tiers."""

    self_weight: float = 1.0
    local_weight: float = 1.0
    global_weight: float = 1.0
    equity_weight: float = 1.0

    def __post_init__(self) -> None:
        for name in ("self_weight", "local_weight", "global_weight", "equity_weight"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValidationError(f"{name} must be finite and >= 0, got {v}")


@dataclass
class AcceptanceLedger:
    """Running tally of whose preferences the voting outcomes matched.

    ``accepted_area`` is normalized by total district area so equity stays
    O(1); ``accepted_area_m2`` keeps the raw square meters for reporting.
    ``request_counts`` counts how often a (role, land use) preference has
    been adopted, which drives the halving of repeated local rewards.
    """

    accepted_area: dict[AgentRole, float] = field(
        default_factory=lambda: {role: 0.0 for role in ALL_ROLES}
    )
    accepted_area_m2: dict[AgentRole, float] = field(
        default_factory=lambda: {role: 0.0 for role in ALL_ROLES}
    )
    request_counts: dict[tuple[AgentRole, LandUse], int] = field(default_factory=dict)

    def times_adopted(self, role: AgentRole, use: LandUse) -> int:
        return self.request_counts.get((role, use), 0)

    def record_acceptance(self, role: AgentRole, use: LandUse, area_m2: float, share: float) -> None:
        self.accepted_area[role] += share
        self.accepted_area_m2[role] += area_m2
        self.request_counts[(role, use)] = self.times_adopted(role, use) + 1

    def copy(self) -> "AcceptanceLedger":
        return AcceptanceLedger(
            accepted_area=dict(self.accepted_area),
            accepted_area_m2=dict(self.accepted_area_m2),
            request_counts=dict(self.request_counts),
        )


def self_reward(role: AgentRole, action: LandUse) -> float:
    """Self-interest tier: the agent's expected benefit from its own vote."""
    return expected_benefit(role, action)


def local_reward(role: AgentRole, action: LandUse, times_adopted: int) -> float:
    """Self reward halved once per previous adoption of the same preference."""
    if times_adopted < 0:
        raise ValidationError(f"times_adopted must be >= 0, got {times_adopted}")
    return self_reward(role, action) * 0.5**times_adopted


def _area_shares(graph: SpatialGraph, area_weighted: bool) -> dict[LandUse, float]:
    if not graph.parcels:
        raise DomainError("metric undefined on an empty district")
    totals = {use: 0.0 for use in ALL_LAND_USES}
    for p in graph.parcels.values():
        totals[p.land_use] += p.area if area_weighted else 1.0
    grand = sum(totals.values())
    if grand <= 0:
        raise DomainError("district has zero total area")
    return {use: t / grand for use, t in totals.items()}


def density_score(
    graph: SpatialGraph,
    target_uses: Iterable[LandUse],
    area_weighted: bool = True,
) -> float:
    """Share of the district devoted to the target uses, in [0, 1].

    Area-weighted by default; ``area_weighted=False`` counts parcel
    occurrences instead.
    """
    shares = _area_shares(graph, area_weighted)
    return sum(shares[use] for use in set(target_uses))


def diversity_score(graph: SpatialGraph, area_weighted: bool = True) -> float:
    """Shannon index of the land-use mix: -sum(p ln p) over present types."""
    shares = _area_shares(graph, area_weighted)
    return -sum(p * math.log(p) for p in shares.values() if p > 0)


def global_reward(
    graph: SpatialGraph,
    target_uses: Iterable[LandUse] = DEFAULT_TARGET_USES,
    area_weighted: bool = True,
) -> float:
    """District-wide tier: target-use density plus Shannon diversity."""
    return density_score(graph, target_uses, area_weighted) + diversity_score(
        graph, area_weighted
    )


def equity_reward(ledger: AcceptanceLedger, raw: bool = False) -> float:
    """Equity tier, always <= 0; zero only under perfectly balanced acceptance.

    Penalizes spread among the three resident brackets (population standard
    deviation) plus the gap between professional and resident acceptance
    totals.
    """
    tallies = ledger.accepted_area_m2 if raw else ledger.accepted_area
    residents = [tallies[role] for role in RESIDENT_ROLES]
    professionals = sum(tallies[role] for role in PROFESSIONAL_ROLES)
    mean = sum(residents) / len(residents)
    popstd = math.sqrt(sum((v - mean) ** 2 for v in residents) / len(residents))
    return -(popstd + abs(professionals - sum(residents)))


def combined_reward(
    r_self: float,
    r_local: float,
    r_global: float,
    r_equity: float,
    weights: RewardWeights = RewardWeights(),
) -> float:
    """Weighted sum of the four reward tiers."""
    return (
        weights.self_weight * r_self
        + weights.local_weight * r_local
        + weights.global_weight * r_global
        + weights.equity_weight * r_equity
    )
