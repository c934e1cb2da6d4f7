"""Consensus training loop: per-agent buffers, returns, and updates.

Every agent samples votes from a role-shared policy over its observation
subgraph (residents see the walkable neighborhood of their home,
professionals see the full district). Transitions collect per episode and
flush into the replay buffer once the episode's discounted returns are
known; from then on each environment step triggers a critic regression
toward those returns followed by an actor step that climbs the critic
through the vote distributions.
"""

from __future__ import annotations

import io
import json
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .agents import Agent, AgentRole
from .autodiff import Tensor
from .environment import (
    EpisodeState,
    eligible_voters,
    reset,
    step,
    trace_record,
)
from .errors import ConfigurationError, ContractError
from .graph import LandUse, SpatialGraph, shortest_path_distances
from .nets import (
    FEATURE_DIM,
    N_ACTIONS,
    VALUE_FEATURE_DIM,
    PolicyNet,
    ValueNet,
    config_hash,
    dense_adjacency,
    init_policy_net,
    init_value_net,
    node_features,
    policy_forward,
    policy_probs_all,
    save_checkpoint,
    value_forward,
)
from .rewards import DEFAULT_TARGET_USES, RewardWeights, equity_reward, global_reward


@dataclass(frozen=True)
class StateSnapshot:
    """What one agent saw at one step: features plus its static adjacency."""

    features: np.ndarray
    adjacency: np.ndarray
    node_ids: tuple[int, ...]
    target_index: int  # -1 when the target is outside the observation


@dataclass(frozen=True)
class Transition:
    state: StateSnapshot
    action: int
    reward: float
    next_state: StateSnapshot
    done: bool
    mc_return: float = 0.0


class ReplayBuffer:
    """Bounded FIFO of transitions; eviction is strictly oldest-first."""

    def __init__(self, capacity: int = 10_000):
        if capacity < 1:
            raise ConfigurationError(f"buffer capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._items: deque[Transition] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._items)

    def append(self, transition: Transition) -> None:
        self._items.append(transition)

    def extend(self, transitions: Sequence[Transition]) -> None:
        self._items.extend(transitions)

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        if batch_size < 1 or batch_size > len(self._items):
            raise ContractError(
                f"cannot sample {batch_size} from buffer of {len(self._items)}"
            )
        idx = rng.choice(len(self._items), size=batch_size, replace=False)
        return [self._items[i] for i in idx]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1
    episodes_per_epoch: int = 200
    gamma: float = 0.95
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    weights: RewardWeights = field(default_factory=RewardWeights)
    radius_m: float = 1250.0
    buffer_capacity: int = 10_000
    hidden: int = 32
    gat_layers: int = 2
    target_uses: frozenset[LandUse] = DEFAULT_TARGET_USES

    def validate(self) -> "TrainConfig":
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must be in [0, 1], got {self.gamma}")
        for name in ("lr_actor", "lr_critic"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        for name in ("epochs", "episodes_per_epoch", "batch_size", "hidden", "gat_layers", "buffer_capacity"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.radius_m < 0:
            raise ConfigurationError("radius_m must be >= 0")
        return self

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "episodes_per_epoch": self.episodes_per_epoch,
            "gamma": self.gamma,
            "lr_actor": self.lr_actor,
            "lr_critic": self.lr_critic,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "weights": {
                "self_weight": self.weights.self_weight,
                "local_weight": self.weights.local_weight,
                "global_weight": self.weights.global_weight,
                "equity_weight": self.weights.equity_weight,
            },
            "radius_m": self.radius_m,
            "buffer_capacity": self.buffer_capacity,
            "hidden": self.hidden,
            "gat_layers": self.gat_layers,
            "target_uses": sorted(u.value for u in self.target_uses),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        weights = RewardWeights(**data.get("weights", {}))
        target = frozenset(LandUse.from_code(c) for c in data.get("target_uses", ["g", "c"]))
        fields = {
            k: data[k]
            for k in (
                "epochs",
                "episodes_per_epoch",
                "gamma",
                "lr_actor",
                "lr_critic",
                "batch_size",
                "seed",
                "radius_m",
                "buffer_capacity",
                "hidden",
                "gat_layers",
            )
            if k in data
        }
        return cls(weights=weights, target_uses=target, **fields).validate()


def compute_returns(rewards: Sequence[float], gamma: float) -> list[float]:
    """Discounted returns by backward recursion; the last step keeps its reward."""
    returns: list[float] = [0.0] * len(rewards)
    running = 0.0
    for i in range(len(rewards) - 1, -1, -1):
        running = rewards[i] + gamma * running
        returns[i] = running
    return returns


def actor_loss(q_values):
    """Negative mean of the critic's scores over a batch."""
    if isinstance(q_values, Tensor):
        if q_values.value.size == 0:
            raise ContractError("actor loss needs a non-empty batch")
        return ad.neg(ad.mean_all(q_values))
    q = np.asarray(q_values, dtype=np.float64)
    if q.size == 0:
        raise ContractError("actor loss needs a non-empty batch")
    return float(-q.mean())


def critic_loss(returns, predictions):
    """Mean squared error between observed returns and critic predictions."""
    if isinstance(predictions, Tensor):
        target = ad.constant(np.asarray(returns, dtype=np.float64))
        if target.value.shape != predictions.value.shape:
            raise ContractError(
                f"returns shape {target.value.shape} != predictions "
                f"shape {predictions.value.shape}"
            )
        if target.value.size == 0:
            raise ContractError("critic loss needs a non-empty batch")
        diff = ad.sub(target, predictions)
        return ad.mean_all(ad.mul(diff, diff))
    r = np.asarray(returns, dtype=np.float64)
    v = np.asarray(predictions, dtype=np.float64)
    if r.shape != v.shape:
        raise ContractError(f"returns shape {r.shape} != predictions shape {v.shape}")
    if r.size == 0:
        raise ContractError("critic loss needs a non-empty batch")
    return float(((r - v) ** 2).mean())


@dataclass(frozen=True)
class AgentView:
    """Static observation structure for one agent over one graph."""

    node_ids: tuple[int, ...]
    index_of: dict[int, int]
    adjacency: np.ndarray


def build_agent_view(graph: SpatialGraph, agent: Agent) -> AgentView:
    if agent.role.is_professional:
        node_ids = tuple(graph.ids())
    else:
        dist = shortest_path_distances(graph, agent.home_parcel)
        node_ids = tuple(
            sorted(pid for pid, d in dist.items() if d <= agent.observation_radius_m)
        )
    return AgentView(
        node_ids=node_ids,
        index_of={pid: i for i, pid in enumerate(node_ids)},
        adjacency=dense_adjacency(graph, node_ids),
    )


def snapshot(view: AgentView, state: EpisodeState) -> StateSnapshot:
    target = state.target if state.target in view.index_of else None
    return StateSnapshot(
        features=node_features(state.graph, view.node_ids, target, state.total_area),
        adjacency=view.adjacency,
        node_ids=view.node_ids,
        target_index=view.index_of.get(target, -1) if target is not None else -1,
    )


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    agent_rewards: dict[int, float]  # mean per voted step; 0 when never eligible
    global_reward: float
    equity_reward: float


@dataclass
class TrainResult:
    policies: dict[AgentRole, PolicyNet]
    critics: dict[AgentRole, ValueNet]
    curves: list[EpisodeRecord]
    config: TrainConfig
    checkpoint_path: Path | None = None


def curves_to_csv(curves: Sequence[EpisodeRecord], agent_ids: Sequence[int]) -> str:
    out = io.StringIO()
    cols = ["episode"] + [f"agent_{aid}_reward" for aid in agent_ids]
    cols += ["global_reward", "equity_reward"]
    out.write(",".join(cols) + "\n")
    for rec in curves:
        row = [str(rec.episode)]
        row += [repr(rec.agent_rewards.get(aid, 0.0)) for aid in agent_ids]
        row += [repr(rec.global_reward), repr(rec.equity_reward)]
        out.write(",".join(row) + "\n")
    return out.getvalue()


def _sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    p = np.clip(probs, 0.0, None)
    p = p / p.sum()
    return int(rng.choice(N_ACTIONS, p=p))


def _update_critic(
    policy: PolicyNet,
    critic: ValueNet,
    batch: Sequence[Transition],
    lr: float,
) -> float:
    feats = np.stack([t.state.features for t in batch])
    adjacency = batch[0].state.adjacency
    returns = np.array([t.mc_return for t in batch])
    with ad.no_grad():
        probs = policy_probs_all(policy, feats, adjacency).value
    predictions = value_forward(critic, feats, probs, adjacency)
    loss = critic_loss(returns, predictions)
    if not np.isfinite(loss.value):
        raise ContractError("critic loss became non-finite")
    params = critic.params()
    ad.zero_grads(params)
    ad.backward(loss)
    if lr > 0:
        ad.sgd_step(params, lr=lr)
    return float(loss.value)


def _update_actor(
    policy: PolicyNet,
    critic: ValueNet,
    batch: Sequence[Transition],
    lr: float,
) -> float:
    feats = np.stack([t.state.features for t in batch])
    adjacency = batch[0].state.adjacency
    probs = policy_probs_all(policy, feats, adjacency)
    q = value_forward(critic, feats, probs, adjacency)
    loss = actor_loss(q)
    if not np.isfinite(loss.value):
        raise ContractError("actor loss became non-finite")
    actor_params = policy.params()
    critic_params = critic.params()
    ad.zero_grads(actor_params)
    ad.zero_grads(critic_params)
    ad.backward(loss)
    if lr > 0:
        ad.sgd_step(actor_params, lr=lr)
    ad.zero_grads(critic_params)
    return float(loss.value)


def train(
    graph: SpatialGraph,
    agents: Sequence[Agent],
    config: TrainConfig,
    checkpoint_dir: str | Path | None = None,
    trace_writer: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Run the full training loop; deterministic for a fixed seed.

    Agents sharing a role share one policy/critic pair, so an update made
    through any of them is visible to all. Returns the trained nets plus
    per-episode reward curves, and writes a checkpoint when
    ``checkpoint_dir`` is given.
    """
    config.validate()
    agents = sorted(agents, key=lambda a: a.id)
    rng = np.random.default_rng(config.seed)

    roles = sorted({a.role for a in agents}, key=lambda r: r.ordinal)
    policies: dict[AgentRole, PolicyNet] = {}
    critics: dict[AgentRole, ValueNet] = {}
    for role in roles:
        policies[role] = init_policy_net(
            rng, FEATURE_DIM, config.hidden, config.gat_layers
        )
        critics[role] = init_value_net(
            rng, VALUE_FEATURE_DIM, config.hidden, config.gat_layers
        )

    views = {a.id: build_agent_view(graph, a) for a in agents}
    buffers = {a.id: ReplayBuffer(config.buffer_capacity) for a in agents}

    curves: list[EpisodeRecord] = []
    total_episodes = 0
    for _epoch in range(config.epochs):
        for _ep in range(config.episodes_per_epoch):
            state = reset(graph, agents, seed=config.seed)
            pending_transitions: dict[int, list[Transition]] = {a.id: [] for a in agents}
            reward_sums = {a.id: 0.0 for a in agents}
            reward_counts = {a.id: 0 for a in agents}

            while not state.done:
                eligible = eligible_voters(state, agents)
                votes: dict[int, int] = {}
                pre_snapshots: dict[int, StateSnapshot] = {}
                for agent in agents:
                    if agent.id not in eligible:
                        continue
                    snap = snapshot(views[agent.id], state)
                    with ad.no_grad():
                        probs = policy_forward(
                            policies[agent.role],
                            snap.features,
                            snap.adjacency,
                            snap.target_index,
                        ).value
                    votes[agent.id] = _sample_action(probs, rng)
                    pre_snapshots[agent.id] = snap

                step_index, target = state.step_index, state.target
                outcome = step(state, votes, agents, config.weights, config.target_uses)
                if trace_writer is not None:
                    trace_writer(trace_record(step_index, target, votes, outcome))

                for agent in agents:
                    if agent.id not in votes:
                        continue
                    reward = outcome.rewards[agent.id]
                    reward_sums[agent.id] += reward
                    reward_counts[agent.id] += 1
                    pending_transitions[agent.id].append(
                        Transition(
                            state=pre_snapshots[agent.id],
                            action=votes[agent.id],
                            reward=reward,
                            next_state=snapshot(views[agent.id], state),
                            done=outcome.done,
                        )
                    )

                for agent in agents:
                    buf = buffers[agent.id]
                    if len(buf) < config.batch_size:
                        continue
                    batch = buf.sample(config.batch_size, rng)
                    _update_critic(
                        policies[agent.role], critics[agent.role], batch, config.lr_critic
                    )
                    _update_actor(
                        policies[agent.role], critics[agent.role], batch, config.lr_actor
                    )

            for agent in agents:
                transitions = pending_transitions[agent.id]
                if not transitions:
                    continue
                returns = compute_returns([t.reward for t in transitions], config.gamma)
                buffers[agent.id].extend(
                    replace(t, mc_return=g) for t, g in zip(transitions, returns)
                )

            curves.append(
                EpisodeRecord(
                    episode=total_episodes,
                    agent_rewards={
                        a.id: (
                            reward_sums[a.id] / reward_counts[a.id]
                            if reward_counts[a.id]
                            else 0.0
                        )
                        for a in agents
                    },
                    global_reward=global_reward(state.graph, config.target_uses),
                    equity_reward=equity_reward(state.ledger),
                )
            )
            total_episodes += 1

    result = TrainResult(
        policies=policies, critics=critics, curves=curves, config=config
    )
    if checkpoint_dir is not None:
        nets = {
            role.value: {"policy": policies[role], "value": critics[role]}
            for role in roles
        }
        result.checkpoint_path = save_checkpoint(
            checkpoint_dir, nets, config.seed, config_hash(config.to_dict())
        )
    return result


def load_policies(path: str | Path) -> dict[AgentRole, PolicyNet]:
    """Role-keyed policies from a checkpoint directory."""
    from .nets import load_checkpoint

    nets, _manifest = load_checkpoint(path)
    return {
        AgentRole.from_code(role_key): pair["policy"] for role_key, pair in nets.items()
    }
