"""Comparison planners and the metric reports they are judged on.

Six methods share one rollout harness: random and greedy voting in both
top-down (planner decides alone) and participatory modes, plus trained
actor-critic policies rolled out greedily either centralized (one planner
on the full district) or as the consensus of all agents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .agents import Agent, AgentRole, greedy_vote, planner_roster
from .environment import EpisodeState, eligible_voters, reset, step, trace_record
from .errors import ContractError, MissingModelError, ValidationError
from .graph import ALL_LAND_USES, LandUse, SpatialGraph
from .nets import N_ACTIONS, PolicyNet, policy_forward
from .rewards import (
    DEFAULT_TARGET_USES,
    AcceptanceLedger,
    RewardWeights,
    density_score,
    diversity_score,
    equity_reward,
    global_reward,
)
from .training import AgentView, build_agent_view, snapshot


class BaselineKind(Enum):
    RTP = "RTP"  # random top-down
    RPP = "RPP"  # random participatory
    GTP = "GTP"  # greedy top-down
    GPP = "GPP"  # greedy participatory
    DTP = "DTP"  # trained top-down (single planner policy)
    MARL = "MARL"  # trained participatory consensus

    @property
    def top_down(self) -> bool:
        return self in (BaselineKind.RTP, BaselineKind.GTP, BaselineKind.DTP)

    @property
    def needs_policies(self) -> bool:
        return self in (BaselineKind.DTP, BaselineKind.MARL)

    @classmethod
    def from_code(cls, code: str) -> "BaselineKind":
        try:
            return cls(code.upper())
        except ValueError:
            raise ValidationError(f"unknown method {code!r}") from None


@dataclass(frozen=True)
class PlanOutcome:
    method: BaselineKind
    seed: int
    assignment: dict[int, LandUse]
    final_graph: SpatialGraph
    ledger: AcceptanceLedger


@dataclass(frozen=True)
class MetricsReport:
    global_reward: float
    equity_reward: float
    equity_reward_raw: float
    sustainability: float
    diversity: float
    global_reward_delta: float
    sustainability_delta: float
    diversity_delta: float


def sustainability(graph: SpatialGraph) -> float:
    """Green plus commercial area share of the district, in [0, 1]."""
    return density_score(graph, (LandUse.GREEN, LandUse.COMMERCIAL))


VoteFn = Callable[[Agent, EpisodeState], int]


def _random_vote(rng: np.random.Generator) -> VoteFn:
    def vote(agent: Agent, state: EpisodeState) -> int:
        return int(rng.integers(N_ACTIONS))

    return vote


def _greedy_vote_fn() -> VoteFn:
    def vote(agent: Agent, state: EpisodeState) -> int:
        return greedy_vote(agent.role).ordinal

    return vote


def _policy_vote_fn(
    policies: Mapping[AgentRole, PolicyNet], views: Mapping[int, AgentView]
) -> VoteFn:
    def vote(agent: Agent, state: EpisodeState) -> int:
        policy = policies.get(agent.role)
        if policy is None:
            raise MissingModelError(
                f"no trained policy for role {agent.role.value}"
            )
        snap = snapshot(views[agent.id], state)
        with ad.no_grad():
            probs = policy_forward(
                policy, snap.features, snap.adjacency, snap.target_index
            ).value
        return int(np.argmax(probs))

    return vote


def rollout(
    graph: SpatialGraph,
    agents: Sequence[Agent],
    vote_fn: VoteFn,
    seed: int,
    weights: RewardWeights = RewardWeights(),
    target_uses: frozenset[LandUse] = DEFAULT_TARGET_USES,
    trace_writer: Callable[[dict], None] | None = None,
) -> tuple[EpisodeState, dict[int, LandUse]]:
    """Play one full episode with the given voting rule; returns final state."""
    agents = sorted(agents, key=lambda a: a.id)
    state = reset(graph, agents, seed=seed)
    assignment: dict[int, LandUse] = {}
    while not state.done:
        eligible = eligible_voters(state, agents)
        votes = {
            a.id: vote_fn(a, state) for a in agents if a.id in eligible
        }
        step_index, target = state.step_index, state.target
        outcome = step(state, votes, agents, weights, target_uses)
        assignment[target] = outcome.chosen_use
        if trace_writer is not None:
            trace_writer(trace_record(step_index, target, votes, outcome))
    return state, assignment


def run_baseline(
    kind: BaselineKind,
    graph: SpatialGraph,
    agents: Sequence[Agent],
    seed: int,
    weights: RewardWeights = RewardWeights(),
    target_uses: frozenset[LandUse] = DEFAULT_TARGET_USES,
    policies: Mapping[AgentRole, PolicyNet] | None = None,
    trace_writer: Callable[[dict], None] | None = None,
) -> PlanOutcome:
    """Produce a complete readjustment plan with one comparison method.

    Random methods draw seeded uniform votes; greedy methods vote each
    role's best benefit-table entry; DTP/MARL need trained policies and
    roll them out greedily. Top-down variants restrict the roster to the
    planner agent.
    """
    roster = planner_roster(agents) if kind.top_down else list(agents)
    if kind.needs_policies:
        if policies is None:
            raise MissingModelError(
                f"{kind.value} needs a trained checkpoint; none was provided"
            )
        views = {a.id: build_agent_view(graph, a) for a in roster}
        vote_fn = _policy_vote_fn(policies, views)
    elif kind in (BaselineKind.RTP, BaselineKind.RPP):
        vote_fn = _random_vote(np.random.default_rng(seed))
    else:
        vote_fn = _greedy_vote_fn()

    state, assignment = rollout(
        graph, roster, vote_fn, seed, weights, target_uses, trace_writer
    )
    return PlanOutcome(
        method=kind,
        seed=seed,
        assignment=assignment,
        final_graph=state.graph,
        ledger=state.ledger,
    )


def evaluate_plan(
    before: SpatialGraph,
    outcome: PlanOutcome,
    weights: RewardWeights = RewardWeights(),
    target_uses: frozenset[LandUse] = DEFAULT_TARGET_USES,
) -> MetricsReport:
    """Score a finished plan on the four comparison metrics plus deltas."""
    readjustable = {pid for pid, p in before.parcels.items() if p.readjustable}
    missing = readjustable - set(outcome.assignment)
    if missing:
        raise ContractError(
            f"plan leaves readjustable parcels unassigned: {sorted(missing)}"
        )
    final = outcome.final_graph
    report = MetricsReport(
        global_reward=global_reward(final, target_uses),
        equity_reward=equity_reward(outcome.ledger),
        equity_reward_raw=equity_reward(outcome.ledger, raw=True),
        sustainability=sustainability(final),
        diversity=diversity_score(final),
        global_reward_delta=global_reward(final, target_uses)
        - global_reward(before, target_uses),
        sustainability_delta=sustainability(final) - sustainability(before),
        diversity_delta=diversity_score(final) - diversity_score(before),
    )
    return report


def apply_assignment(
    before: SpatialGraph, assignment: Mapping[int, LandUse]
) -> SpatialGraph:
    """District with the plan's land uses written onto a copy of the graph."""
    final = before.copy()
    for pid, use in assignment.items():
        if pid not in final.parcels:
            raise ValidationError(f"plan references unknown parcel {pid}")
        if not final.parcels[pid].readjustable:
            raise ValidationError(f"plan reassigns non-readjustable parcel {pid}")
        final.parcels[pid].land_use = use
        final.parcels[pid].assigned = True
    return final


def median(values: Iterable[float]) -> float:
    ordered = sorted(values)
    if not ordered:
        raise ValidationError("median of empty sequence")
    mid = len(ordered) // 2
    if len(ordered) % 2:
        return ordered[mid]
    return 0.5 * (ordered[mid - 1] + ordered[mid])


@dataclass(frozen=True)
class ComparisonRow:
    method: str
    global_reward: float | None
    equity_reward: float | None
    sustainability: float
    diversity: float


def comparison_rows(
    before: SpatialGraph,
    reports: Mapping[BaselineKind, Sequence[MetricsReport]],
    target_uses: frozenset[LandUse] = DEFAULT_TARGET_USES,
) -> list[ComparisonRow]:
    """Original-status row plus one median-over-seeds row per method."""
    rows = [
        ComparisonRow(
            method="Original Status",
            global_reward=global_reward(before, target_uses),
            equity_reward=None,
            sustainability=sustainability(before),
            diversity=diversity_score(before),
        )
    ]
    for kind in BaselineKind:
        if kind not in reports:
            continue
        rs = reports[kind]
        rows.append(
            ComparisonRow(
                method=kind.value,
                global_reward=median(r.global_reward for r in rs),
                equity_reward=median(r.equity_reward for r in rs),
                sustainability=median(r.sustainability for r in rs),
                diversity=median(r.diversity for r in rs),
            )
        )
    return rows


def comparison_csv(rows: Sequence[ComparisonRow]) -> str:
    def cell(v: float | None) -> str:
        return "" if v is None else repr(v)

    lines = ["method,global_reward,equity_reward,sustainability,diversity"]
    for r in rows:
        lines.append(
            ",".join(
                [
                    r.method,
                    cell(r.global_reward),
                    cell(r.equity_reward),
                    cell(r.sustainability),
                    cell(r.diversity),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def comparison_text(rows: Sequence[ComparisonRow]) -> str:
    headers = ["Method", "Global reward", "Equity reward", "Sustainability", "Diversity"]

    def fmt(v: float | None) -> str:
        return "-" if v is None else f"{v:.4f}"

    table = [headers] + [
        [r.method, fmt(r.global_reward), fmt(r.equity_reward), fmt(r.sustainability), fmt(r.diversity)]
        for r in rows
    ]
    widths = [max(len(row[i]) for row in table) for i in range(len(headers))]
    lines = []
    for i, row in enumerate(table):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
