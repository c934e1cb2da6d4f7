"""Sequential per-parcel voting environment.

Each episode walks the readjustable parcels in ascending-id order. At
every step the eligible agents cast one vote each, the plurality winner
becomes the parcel's new land use, the acceptance ledger is updated, and
every voter receives its combined reward evaluated on the post-step
district. Transitions are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .agents import Agent
from .errors import AggregationError, ConfigurationError, ContractError
from .graph import ALL_LAND_USES, LandUse, SpatialGraph, shortest_path_distances
from .rewards import (
    DEFAULT_TARGET_USES,
    AcceptanceLedger,
    RewardWeights,
    combined_reward,
    equity_reward,
    global_reward,
    local_reward,
    self_reward,
)

# agent id -> land-use ordinal voted
JointAction = Mapping[int, int]


@dataclass
class EpisodeState:
    """Mutable per-episode state; owns a private copy of the graph."""

    graph: SpatialGraph
    pending: list[int]
    target: int | None
    ledger: AcceptanceLedger
    step_index: int
    seed: int
    total_area: float

    @property
    def done(self) -> bool:
        return not self.pending

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EpisodeState):
            return NotImplemented
        return (
            self.graph == other.graph
            and self.pending == other.pending
            and self.target == other.target
            and self.ledger == other.ledger
            and self.step_index == other.step_index
            and self.seed == other.seed
        )


@dataclass(frozen=True)
class StepOutcome:
    next_state: EpisodeState
    rewards: dict[int, float]
    chosen_use: LandUse
    done: bool


def reset(graph: SpatialGraph, agents: Sequence[Agent], seed: int = 0) -> EpisodeState:
    """Fresh episode over a private copy of the graph.

    Pending parcels are the readjustable ones in ascending-id order; all
    start unassigned. The result is a pure function of (graph, seed).
    """
    pending = sorted(
        pid for pid, p in graph.parcels.items() if p.readjustable
    )
    if not pending:
        raise ConfigurationError("no readjustable parcels: nothing to vote on")
    episode_graph = graph.copy()
    for pid in pending:
        episode_graph.parcels[pid].assigned = False
    return EpisodeState(
        graph=episode_graph,
        pending=pending,
        target=pending[0],
        ledger=AcceptanceLedger(),
        step_index=0,
        seed=seed,
        total_area=episode_graph.total_area,
    )


def eligible_voters(state: EpisodeState, agents: Sequence[Agent]) -> set[int]:
    """Agents allowed to vote on the current target.

    Professionals always vote. A resident votes only when the target lies
    within its observation radius, measured as shortest-path distance over
    edge lengths from its home parcel.
    """
    if state.target is None:
        raise ContractError("episode is done; no target to vote on")
    dist_from_target = shortest_path_distances(state.graph, state.target)
    eligible: set[int] = set()
    for agent in agents:
        if agent.role.is_professional:
            eligible.add(agent.id)
            continue
        d = dist_from_target.get(agent.home_parcel)
        if d is not None and d <= agent.observation_radius_m:
            eligible.add(agent.id)
    return eligible


def tally_votes(votes: Iterable[LandUse]) -> LandUse:
    """Plurality winner; ties break toward the lowest land-use ordinal."""
    counts = [0] * len(ALL_LAND_USES)
    empty = True
    for vote in votes:
        counts[vote.ordinal] += 1
        empty = False
    if empty:
        raise AggregationError("cannot tally an empty vote set")
    best = max(range(len(counts)), key=lambda o: (counts[o], -o))
    return ALL_LAND_USES[best]


def step(
    state: EpisodeState,
    joint_action: JointAction,
    agents: Sequence[Agent],
    weights: RewardWeights = RewardWeights(),
    target_uses: frozenset[LandUse] = DEFAULT_TARGET_USES,
) -> StepOutcome:
    """Apply one voting round to the current target parcel.

    ``joint_action`` must cover exactly the eligible voters. Winners (the
    voters whose vote matched the outcome) are credited in the ledger
    before rewards are computed; the halving count for the local tier is
    taken from before this step's adoptions.
    """
    eligible = eligible_voters(state, agents)
    voted = set(joint_action)
    if voted != eligible:
        extra = sorted(voted - eligible)
        missing = sorted(eligible - voted)
        raise ContractError(
            f"joint action must cover exactly the eligible voters "
            f"(unexpected={extra}, missing={missing})"
        )
    by_id = {a.id: a for a in agents}
    votes = {aid: LandUse.from_ordinal(o) for aid, o in joint_action.items()}
    chosen = tally_votes(votes.values())

    # halving counts snapshot: adoptions before this round
    prior_counts = {
        aid: state.ledger.times_adopted(by_id[aid].role, vote)
        for aid, vote in votes.items()
    }

    parcel = state.graph.parcels[state.target]
    parcel.land_use = chosen
    parcel.assigned = True
    share = parcel.area / state.total_area
    for aid, vote in votes.items():
        if vote is chosen:
            state.ledger.record_acceptance(by_id[aid].role, chosen, parcel.area, share)

    r_global = global_reward(state.graph, target_uses)
    r_equity = equity_reward(state.ledger)
    rewards: dict[int, float] = {}
    for agent in agents:
        if agent.id in votes:
            vote = votes[agent.id]
            rewards[agent.id] = combined_reward(
                self_reward(agent.role, vote),
                local_reward(agent.role, vote, prior_counts[agent.id]),
                r_global,
                r_equity,
                weights,
            )
        else:
            rewards[agent.id] = 0.0

    state.pending.pop(0)
    state.step_index += 1
    state.target = state.pending[0] if state.pending else None
    return StepOutcome(
        next_state=state, rewards=rewards, chosen_use=chosen, done=state.done
    )


def trace_record(
    step_index: int,
    target: int,
    joint_action: JointAction,
    outcome: StepOutcome,
) -> dict:
    """One JSON-serializable record per step for episode trace logs."""
    return {
        "step": step_index,
        "target": target,
        "votes": {str(aid): int(o) for aid, o in sorted(joint_action.items())},
        "chosen": outcome.chosen_use.value,
        "rewards": {str(aid): r for aid, r in sorted(outcome.rewards.items())},
    }
