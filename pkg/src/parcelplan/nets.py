"""Graph-attention actor and critic networks on the autodiff core.

The actor turns an observation subgraph into a 5-way vote distribution
for the target parcel; the critic scores the state with the actor's
per-node distributions concatenated into the node features, mean-pooled,
and passed through a linear head.

Node features are: one-hot land use (5), area normalized by district
area, readjustable flag, assigned flag, is-target flag — 9 inputs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError, GraphLookupError, ParseError
from .graph import SpatialGraph

FEATURE_DIM = 9
N_ACTIONS = 5
VALUE_FEATURE_DIM = FEATURE_DIM + N_ACTIONS
DEFAULT_HIDDEN = 32
DEFAULT_LAYERS = 2
LEAKY_SLOPE = 0.2

CHECKPOINT_FORMAT = "parcelplan-checkpoint"
CHECKPOINT_VERSION = 1


def node_features(
    graph: SpatialGraph,
    node_ids: Sequence[int],
    target_id: int | None,
    total_area: float,
) -> np.ndarray:
    """Feature matrix (N x 9) for the given nodes of the current district."""
    feats = np.zeros((len(node_ids), FEATURE_DIM))
    for row, pid in enumerate(node_ids):
        p = graph.parcels[pid]
        feats[row, p.land_use.ordinal] = 1.0
        feats[row, 5] = p.area / total_area
        feats[row, 6] = 1.0 if p.readjustable else 0.0
        feats[row, 7] = 1.0 if p.assigned else 0.0
        feats[row, 8] = 1.0 if pid == target_id else 0.0
    return feats


def dense_adjacency(graph: SpatialGraph, node_ids: Sequence[int]) -> np.ndarray:
    """0/1 adjacency mask between the listed nodes (no self-loops)."""
    index = {pid: i for i, pid in enumerate(node_ids)}
    mask = np.zeros((len(node_ids), len(node_ids)))
    for pid in node_ids:
        for j, _d in graph.adjacency.get(pid, ()):
            if j in index:
                mask[index[pid], index[j]] = 1.0
    return mask


@dataclass
class GatLayer:
    """One attention layer: weight (out x in), stacked attention vector (2*out x 1)."""

    weight: Tensor
    att: Tensor
    negative_slope: float = LEAKY_SLOPE

    @property
    def in_dim(self) -> int:
        return self.weight.value.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.value.shape[0]

    def params(self) -> list[Tensor]:
        return [self.weight, self.att]


def _with_self_loops(adjacency: np.ndarray) -> np.ndarray:
    if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
        raise DimensionError(f"adjacency must be square, got {adjacency.shape}")
    mask = (adjacency > 0).astype(np.float64)
    np.fill_diagonal(mask, 1.0)
    return mask


def _attention(layer: GatLayer, features: Tensor, mask: np.ndarray):
    h = ad.matmul(features, ad.transpose_last2(layer.weight))
    out = layer.out_dim
    src = ad.matmul(h, ad.rows(layer.att, 0, out))
    dst = ad.matmul(h, ad.rows(layer.att, out, 2 * out))
    alpha = ad.attention_softmax(src, dst, mask, layer.negative_slope)
    return h, alpha


def gat_forward(layer: GatLayer, features: Tensor | np.ndarray, adjacency: np.ndarray) -> Tensor:
    """Attention-weighted neighbor aggregation with an ELU on the output.

    Self-loops are always added so every neighborhood is non-empty.
    ``features`` is (N x F) or batched (B x N x F); adjacency is shared
    across the batch.
    """
    features = ad.constant(features)
    if not np.isfinite(features.value).all():
        raise DimensionError("features must be finite")
    if features.value.shape[-1] != layer.in_dim:
        raise DimensionError(
            f"feature width {features.value.shape[-1]} does not match "
            f"layer input {layer.in_dim}"
        )
    mask = _with_self_loops(adjacency)
    if mask.shape[0] != features.value.shape[-2]:
        raise DimensionError(
            f"adjacency for {mask.shape[0]} nodes but features carry "
            f"{features.value.shape[-2]}"
        )
    h, alpha = _attention(layer, features, mask)
    return ad.elu(ad.matmul(alpha, h))


def attention_coefficients(
    layer: GatLayer, features: Tensor | np.ndarray, adjacency: np.ndarray
) -> np.ndarray:
    """The normalized attention matrix, for inspection; rows sum to 1."""
    with ad.no_grad():
        _h, alpha = _attention(layer, ad.constant(features), _with_self_loops(adjacency))
    return alpha.value


@dataclass
class PolicyNet:
    """GAT stack plus a 5-wide linear head producing a vote distribution."""

    layers: list[GatLayer]
    head_weight: Tensor  # (5 x hidden)
    head_bias: Tensor  # (1 x 5)

    def params(self) -> list[Tensor]:
        out = [p for layer in self.layers for p in layer.params()]
        out += [self.head_weight, self.head_bias]
        return out


@dataclass
class ValueNet:
    """GAT stack over feature||policy inputs, mean-pooled into a scalar head."""

    layers: list[GatLayer]
    head_weight: Tensor  # (1 x hidden)
    head_bias: Tensor  # (1 x 1)

    def params(self) -> list[Tensor]:
        out = [p for layer in self.layers for p in layer.params()]
        out += [self.head_weight, self.head_bias]
        return out


def _run_stack(layers: Iterable[GatLayer], features, adjacency: np.ndarray) -> Tensor:
    h = ad.constant(features)
    for layer in layers:
        h = gat_forward(layer, h, adjacency)
    return h


def policy_logits_all(net: PolicyNet, features, adjacency: np.ndarray) -> Tensor:
    h = _run_stack(net.layers, features, adjacency)
    return ad.add(ad.matmul(h, ad.transpose_last2(net.head_weight)), net.head_bias)


def policy_probs_all(net: PolicyNet, features, adjacency: np.ndarray) -> Tensor:
    """Per-node vote distributions (..., N, 5); every row sums to 1."""
    return ad.softmax_last(policy_logits_all(net, features, adjacency))


def policy_forward(
    net: PolicyNet, features, adjacency: np.ndarray, target_index: int
) -> Tensor:
    """Vote distribution for the target node (length-5, positive, sums to 1)."""
    logits = policy_logits_all(net, features, adjacency)
    if not 0 <= target_index < logits.value.shape[-2]:
        raise GraphLookupError(
            f"target index {target_index} not in subgraph of "
            f"{logits.value.shape[-2]} nodes"
        )
    return ad.softmax_last(ad.take_node(logits, target_index))


def value_forward(
    net: ValueNet, features, policy_outputs, adjacency: np.ndarray
) -> Tensor:
    """Scalar score of a state given the actor's per-node distributions.

    Batched inputs (B x N x F) yield a (B,) result.
    """
    features = ad.constant(features)
    policy_outputs = ad.constant(policy_outputs)
    if features.value.shape[:-1] != policy_outputs.value.shape[:-1]:
        raise DimensionError(
            f"policy outputs {policy_outputs.value.shape} are not aligned "
            f"with features {features.value.shape}"
        )
    f = ad.concat_last(features, policy_outputs)
    h = _run_stack(net.layers, f, adjacency)
    pooled = ad.mean_nodes(h)  # (..., 1, hidden)
    q = ad.add(ad.matmul(pooled, ad.transpose_last2(net.head_weight)), net.head_bias)
    return ad.reshape(q, q.value.shape[:-2])


def _xavier(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    fan_out, fan_in = shape
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


def _init_layers(
    rng: np.random.Generator, in_dim: int, hidden: int, n_layers: int
) -> list[GatLayer]:
    layers = []
    width_in = in_dim
    for _ in range(n_layers):
        layers.append(
            GatLayer(
                weight=ad.parameter(_xavier(rng, (hidden, width_in))),
                att=ad.parameter(_xavier(rng, (2 * hidden, 1))),
            )
        )
        width_in = hidden
    return layers


def init_policy_net(
    rng: np.random.Generator,
    in_dim: int = FEATURE_DIM,
    hidden: int = DEFAULT_HIDDEN,
    n_layers: int = DEFAULT_LAYERS,
) -> PolicyNet:
    return PolicyNet(
        layers=_init_layers(rng, in_dim, hidden, n_layers),
        head_weight=ad.parameter(_xavier(rng, (N_ACTIONS, hidden))),
        head_bias=ad.parameter(np.zeros((1, N_ACTIONS))),
    )


def init_value_net(
    rng: np.random.Generator,
    in_dim: int = VALUE_FEATURE_DIM,
    hidden: int = DEFAULT_HIDDEN,
    n_layers: int = DEFAULT_LAYERS,
) -> ValueNet:
    return ValueNet(
        layers=_init_layers(rng, in_dim, hidden, n_layers),
        head_weight=ad.parameter(_xavier(rng, (1, hidden))),
        head_bias=ad.parameter(np.zeros((1, 1))),
    )


# ---------------------------------------------------------------------------
# Checkpoints: manifest.json (shapes, seed, config hash, parameter order)
# plus params.bin, a little-endian float64 blob in manifest order.


def _named_params(nets: dict[str, dict[str, PolicyNet | ValueNet]]):
    for role_key in sorted(nets):
        for net_key in sorted(nets[role_key]):
            net = nets[role_key][net_key]
            for i, layer in enumerate(net.layers):
                yield f"{role_key}/{net_key}/layer{i}/weight", layer.weight
                yield f"{role_key}/{net_key}/layer{i}/att", layer.att
            yield f"{role_key}/{net_key}/head_weight", net.head_weight
            yield f"{role_key}/{net_key}/head_bias", net.head_bias


def config_hash(config_dict: dict) -> str:
    canonical = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def save_checkpoint(
    path: str | Path,
    nets: dict[str, dict[str, PolicyNet | ValueNet]],
    seed: int,
    config_digest: str = "",
) -> Path:
    """Write manifest.json + params.bin under ``path`` (a directory)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = []
    blob = bytearray()
    offset = 0
    for name, tensor in _named_params(nets):
        data = np.ascontiguousarray(tensor.value, dtype="<f8").tobytes()
        entries.append(
            {"name": name, "shape": list(tensor.value.shape), "offset": offset}
        )
        blob.extend(data)
        offset += len(data)
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dtype": "<f8",
        "seed": seed,
        "config_hash": config_digest,
        "negative_slope": LEAKY_SLOPE,
        "params": entries,
    }
    (path / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )
    (path / "params.bin").write_bytes(bytes(blob))
    return path


def load_checkpoint(path: str | Path):
    """Rebuild the nets saved by :func:`save_checkpoint`.

    Returns ``(nets, manifest)`` where nets maps role key -> {"policy":
    PolicyNet, "value": ValueNet}.
    """
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ParseError(f"no checkpoint manifest under {path}") from None
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise ParseError(f"not a checkpoint manifest: {path}")
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise ParseError(f"unsupported checkpoint version {manifest.get('version')}")
    blob = (path / "params.bin").read_bytes()

    tensors: dict[str, Tensor] = {}
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=start)
        tensors[entry["name"]] = ad.parameter(arr.reshape(shape).copy())

    nets: dict[str, dict[str, PolicyNet | ValueNet]] = {}
    grouped: dict[tuple[str, str], dict[str, Tensor]] = {}
    for name, tensor in tensors.items():
        role_key, net_key, *rest = name.split("/")
        grouped.setdefault((role_key, net_key), {})["/".join(rest)] = tensor
    slope = float(manifest.get("negative_slope", LEAKY_SLOPE))
    for (role_key, net_key), parts in grouped.items():
        n_layers = sum(1 for k in parts if k.endswith("/weight"))
        layers = [
            GatLayer(
                weight=parts[f"layer{i}/weight"],
                att=parts[f"layer{i}/att"],
                negative_slope=slope,
            )
            for i in range(n_layers)
        ]
        cls = PolicyNet if net_key == "policy" else ValueNet
        nets.setdefault(role_key, {})[net_key] = cls(
            layers=layers,
            head_weight=parts["head_weight"],
            head_bias=parts["head_bias"],
        )
    return nets, manifest
