"""Stakeholder roles, agent placement, and the role/land-use benefit table."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigurationError, ValidationError
from .graph import ALL_LAND_USES, LandUse, SpatialGraph


class AgentRole(Enum):
    """Five stakeholder roles; ordinals index rows of the benefit table."""

    PLANNERS = "planners"
    DEVELOPERS = "developers"
    LOW_INCOME = "low"
    MID_INCOME = "mid"
    HIGH_INCOME = "high"

    @property
    def ordinal(self) -> int:
        return _ROLE_ORDER.index(self)

    @property
    def is_professional(self) -> bool:
        return self in PROFESSIONAL_ROLES

    @classmethod
    def from_code(cls, code: str) -> "AgentRole":
        try:
            return cls(code)
        except ValueError:
            raise ValidationError(f"unknown agent role {code!r}") from None


_ROLE_ORDER = (
    AgentRole.PLANNERS,
    AgentRole.DEVELOPERS,
    AgentRole.LOW_INCOME,
    AgentRole.MID_INCOME,
    AgentRole.HIGH_INCOME,
)

ALL_ROLES = _ROLE_ORDER
PROFESSIONAL_ROLES = (AgentRole.PLANNERS, AgentRole.DEVELOPERS)
RESIDENT_ROLES = (
    AgentRole.LOW_INCOME,
    AgentRole.MID_INCOME,
    AgentRole.HIGH_INCOME,
)

# Expected-benefit scores: rows follow AgentRole ordinals, columns follow
# LandUse ordinals (r, o, g, c, f). Values are restricted to {0, 0.5, 1}.
EXPECTED_BENEFIT = np.array(
    [
        [1.0, 1.0, 1.0, 0.5, 0.5],  # planners
        [1.0, 1.0, 1.0, 1.0, 1.0],  # developers
        [0.0, 1.0, 1.0, 0.0, 0.5],  # low income
        [1.0, 0.5, 1.0, 0.5, 0.5],  # mid income
        [1.0, 0.0, 0.5, 1.0, 0.5],  # high income
    ]
)
EXPECTED_BENEFIT.setflags(write=False)

WALK_RADIUS_M = 1250.0  # 15-minute walkability radius


def expected_benefit(role: AgentRole, use: LandUse) -> float:
    """Benefit score this role expects from a land use (0, 0.5, or 1)."""
    return float(EXPECTED_BENEFIT[role.ordinal, use.ordinal])


def greedy_vote(role: AgentRole) -> LandUse:
    """Most beneficial land use for the role; ties go to the lowest ordinal."""
    row = EXPECTED_BENEFIT[role.ordinal]
    return ALL_LAND_USES[int(np.argmax(row))]


@dataclass(frozen=True)
class Agent:
    """One decision-making representative of a stakeholder group.

    Residents carry a home parcel and a bounded observation radius;
    professionals observe the whole district (``home_parcel`` and
    ``observation_radius_m`` are None).
    """

    id: int
    role: AgentRole
    home_parcel: int | None = None
    observation_radius_m: float | None = None

    def __post_init__(self) -> None:
        if self.role.is_professional:
            if self.home_parcel is not None:
                raise ValidationError(
                    f"agent {self.id}: professionals have no home parcel"
                )
        else:
            if self.home_parcel is None:
                raise ValidationError(
                    f"agent {self.id}: residents need a home parcel"
                )
            if self.observation_radius_m is None or self.observation_radius_m < 0:
                raise ValidationError(
                    f"agent {self.id}: residents need a non-negative radius"
                )


def default_resident_homes(graph: SpatialGraph) -> dict[AgentRole, int]:
    """Pick one home parcel per income bracket.

    Residential parcels are split into area terciles; each bracket homes at
    the largest parcel of its tercile (low income in the smallest-area
    tercile). Falls back to all parcels when the district has fewer than
    three residential ones. Ties break by ascending parcel id.
    """
    residential = [
        p for p in graph.parcels.values() if p.land_use is LandUse.RESIDENTIAL
    ]
    pool = residential if len(residential) >= 3 else list(graph.parcels.values())
    if len(pool) < 3:
        raise ConfigurationError("need at least 3 parcels to place residents")
    by_area = sorted(pool, key=lambda p: (p.area, -p.id))
    n = len(by_area)
    terciles = [by_area[: n // 3], by_area[n // 3 : 2 * n // 3], by_area[2 * n // 3 :]]
    homes: dict[AgentRole, int] = {}
    for role, group in zip(RESIDENT_ROLES, terciles):
        best = max(group, key=lambda p: (p.area, -p.id))
        homes[role] = best.id
    return homes


def default_roster(
    graph: SpatialGraph,
    radius_m: float = WALK_RADIUS_M,
    homes: dict[AgentRole, int] | None = None,
) -> list[Agent]:
    """One agent per role: two professionals plus three placed residents."""
    if homes is None:
        homes = default_resident_homes(graph)
    for role in RESIDENT_ROLES:
        if role not in homes:
            raise ConfigurationError(f"no home parcel for {role.value}")
        if homes[role] not in graph.parcels:
            raise ConfigurationError(
                f"home parcel {homes[role]} for {role.value} not in graph"
            )
    agents = [
        Agent(id=0, role=AgentRole.PLANNERS),
        Agent(id=1, role=AgentRole.DEVELOPERS),
    ]
    for offset, role in enumerate(RESIDENT_ROLES):
        agents.append(
            Agent(
                id=2 + offset,
                role=role,
                home_parcel=homes[role],
                observation_radius_m=radius_m,
            )
        )
    return agents


def planner_roster(agents: list[Agent]) -> list[Agent]:
    """Restrict a roster to its first planner, for top-down decision modes."""
    for agent in sorted(agents, key=lambda a: a.id):
        if agent.role is AgentRole.PLANNERS:
            return [agent]
    raise ConfigurationError("top-down mode needs a planner agent in the roster")
