"""Parcel data model, CSV/GeoJSON ingestion, and KNN spatial graphs.

Coordinates are projected planar meters; callers ingesting lat/lon data
must pre-project it. Edge weights are raw Euclidean distances in meters.
A ``SpatialGraph`` is treated as immutable after construction and may be
shared read-only across threads; simulation code that needs to mutate
land uses works on a private :meth:`SpatialGraph.copy`.
"""

from __future__ import annotations

import csv
import heapq
import io
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    GraphLookupError,
    ParseError,
    ValidationError,
)

CSV_FIELDS = ("id", "land_use", "area", "x", "y", "vacant", "obsolete", "open_space")

_TRUE_WORDS = {"1", "true", "yes", "t"}
_FALSE_WORDS = {"0", "false", "no", "f", ""}


class LandUse(Enum):
    """The five land-use categories, with a fixed ordinal order."""

    RESIDENTIAL = "r"
    OFFICE = "o"
    GREEN = "g"
    COMMERCIAL = "c"
    FACILITIES = "f"

    @property
    def ordinal(self) -> int:
        return _LAND_USE_ORDER.index(self)

    @classmethod
    def from_code(cls, code: str) -> "LandUse":
        try:
            return cls(code)
        except ValueError:
            raise ValidationError(f"unknown land-use code {code!r}") from None

    @classmethod
    def from_ordinal(cls, ordinal: int) -> "LandUse":
        if not 0 <= ordinal < len(_LAND_USE_ORDER):
            raise ValidationError(f"land-use ordinal {ordinal} outside 0..4")
        return _LAND_USE_ORDER[ordinal]


_LAND_USE_ORDER = (
    LandUse.RESIDENTIAL,
    LandUse.OFFICE,
    LandUse.GREEN,
    LandUse.COMMERCIAL,
    LandUse.FACILITIES,
)

ALL_LAND_USES = _LAND_USE_ORDER


@dataclass
class Parcel:
    """One land parcel: a node of the spatial graph."""

    id: int
    land_use: LandUse
    area: float
    x: float
    y: float
    vacant: bool = False
    obsolete: bool = False
    open_space: bool = False
    readjustable: bool = False
    assigned: bool = False

    def distance_to(self, other: "Parcel") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass
class SpatialGraph:
    """Parcels plus a symmetric distance-weighted adjacency.

    ``adjacency[i]`` lists ``(neighbor_id, distance_m)`` pairs sorted by
    (distance, neighbor id). The structure is symmetric: whenever
    ``(j, d)`` appears under ``i``, ``(i, d)`` appears under ``j``.
    """

    parcels: dict[int, Parcel]
    adjacency: dict[int, list[tuple[int, float]]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.adjacency:
            self.adjacency = {pid: [] for pid in self.parcels}

    def ids(self) -> list[int]:
        return sorted(self.parcels)

    @property
    def total_area(self) -> float:
        return sum(p.area for p in self.parcels.values())

    def neighbors(self, parcel_id: int) -> list[tuple[int, float]]:
        try:
            return self.adjacency[parcel_id]
        except KeyError:
            raise GraphLookupError(f"parcel {parcel_id} not in graph") from None

    def copy(self) -> "SpatialGraph":
        """Independent copy whose parcels may be mutated freely."""
        return SpatialGraph(
            parcels={pid: replace(p) for pid, p in self.parcels.items()},
            adjacency={pid: list(nbrs) for pid, nbrs in self.adjacency.items()},
        )


def _parse_bool(raw: str, line_num: int, column: str) -> bool:
    word = raw.strip().lower()
    if word in _TRUE_WORDS:
        return True
    if word in _FALSE_WORDS:
        return False
    raise ValidationError(f"line {line_num}: {column}={raw!r} is not a boolean")


def parse_parcels(text: str) -> list[Parcel]:
    """Parse the parcel ingestion CSV into a list of parcels.

    The header must carry exactly the columns
    ``id,land_use,area,x,y,vacant,obsolete,open_space``. Readjustable and
    assigned flags start out false; readjustment selection happens in
    :func:`select_readjustment_parcels`.
    """
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise ParseError("empty input: missing CSV header")
    if tuple(reader.fieldnames) != CSV_FIELDS:
        raise ParseError(
            f"bad header {reader.fieldnames!r}; expected {','.join(CSV_FIELDS)}"
        )
    parcels: list[Parcel] = []
    seen: set[int] = set()
    for row in reader:
        line = reader.line_num
        if None in row or any(v is None for v in row.values()):
            raise ParseError(f"line {line}: wrong number of fields")
        try:
            pid = int(row["id"])
            area = float(row["area"])
            x = float(row["x"])
            y = float(row["y"])
        except ValueError as exc:
            raise ParseError(f"line {line}: {exc}") from None
        try:
            use = LandUse.from_code(row["land_use"].strip())
        except ValidationError as exc:
            raise ValidationError(f"line {line}: {exc}") from None
        if pid in seen:
            raise ValidationError(f"line {line}: duplicate parcel id {pid}")
        if not area > 0:
            raise ValidationError(f"line {line}: area must be > 0, got {area}")
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValidationError(f"line {line}: non-finite coordinates")
        seen.add(pid)
        parcels.append(
            Parcel(
                id=pid,
                land_use=use,
                area=area,
                x=x,
                y=y,
                vacant=_parse_bool(row["vacant"], line, "vacant"),
                obsolete=_parse_bool(row["obsolete"], line, "obsolete"),
                open_space=_parse_bool(row["open_space"], line, "open_space"),
            )
        )
    return parcels


def serialize_parcels(parcels: Iterable[Parcel]) -> str:
    """Emit parcels in the ingestion schema; inverse of :func:`parse_parcels`."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for p in parcels:
        writer.writerow(
            [
                p.id,
                p.land_use.value,
                repr(p.area),
                repr(p.x),
                repr(p.y),
                int(p.vacant),
                int(p.obsolete),
                int(p.open_space),
            ]
        )
    return out.getvalue()


def select_readjustment_parcels(parcels: Iterable[Parcel]) -> set[int]:
    """Ids of parcels eligible for readjustment; marks them readjustable.

    A parcel qualifies when any of its vacant / obsolete / open-space
    flags is set. An empty result is legal.
    """
    selected: set[int] = set()
    for p in parcels:
        if p.vacant or p.obsolete or p.open_space:
            p.readjustable = True
            selected.add(p.id)
    return selected


def build_knn_graph(parcels: Sequence[Parcel], k: int) -> SpatialGraph:
    """Connect each parcel to its k nearest peers by Euclidean distance.

    The directed k-NN edge set is symmetrized by union, so node degree is
    at least k. Distance ties break toward the lower parcel id so the
    construction is deterministic.
    """
    if k < 1:
        raise ConfigurationError(f"k must be >= 1, got {k}")
    parcels = list(parcels)
    if len(parcels) < k + 1:
        raise ConfigurationError(
            f"need at least {k + 1} parcels for k={k}, got {len(parcels)}"
        )
    ids = np.array([p.id for p in parcels])
    coords = np.array([[p.x, p.y] for p in parcels], dtype=np.float64)
    if not np.isfinite(coords).all():
        raise ValidationError("parcel coordinates must be finite")
    diff = coords[:, None, :] - coords[None, :, :]
    dists = np.hypot(diff[..., 0], diff[..., 1])

    edges: dict[tuple[int, int], float] = {}
    n = len(parcels)
    for i in range(n):
        # lexsort: primary key distance, secondary key parcel id
        order = np.lexsort((ids, dists[i]))
        picked = 0
        for j in order:
            if j == i:
                continue
            a, b = int(ids[i]), int(ids[j])
            edges[(min(a, b), max(a, b))] = float(dists[i, j])
            picked += 1
            if picked == k:
                break

    graph = SpatialGraph(parcels={p.id: replace(p) for p in parcels})
    for (a, b), d in edges.items():
        graph.adjacency[a].append((b, d))
        graph.adjacency[b].append((a, d))
    for pid in graph.adjacency:
        graph.adjacency[pid].sort(key=lambda e: (e[1], e[0]))
    return graph


def shortest_path_distances(graph: SpatialGraph, origin_id: int) -> dict[int, float]:
    """Dijkstra over edge distances from ``origin_id`` to every reachable node."""
    if origin_id not in graph.parcels:
        raise GraphLookupError(f"parcel {origin_id} not in graph")
    dist: dict[int, float] = {origin_id: 0.0}
    heap: list[tuple[float, int]] = [(0.0, origin_id)]
    while heap:
        d, node = heapq.heappop(heap)
        if d > dist.get(node, math.inf):
            continue
        for nbr, w in graph.adjacency.get(node, ()):
            nd = d + w
            if nd < dist.get(nbr, math.inf):
                dist[nbr] = nd
                heapq.heappush(heap, (nd, nbr))
    return dist


def observation_subgraph(
    graph: SpatialGraph, origin_id: int, radius_m: float
) -> SpatialGraph:
    """Induced subgraph of nodes within ``radius_m`` path distance of origin.

    Distance is the shortest-path sum of edge lengths, not hop count, so a
    chain of two 800 m edges puts the far end at 1600 m. The origin itself
    is always retained.
    """
    dist = shortest_path_distances(graph, origin_id)
    keep = {pid for pid, d in dist.items() if d <= radius_m}
    sub = SpatialGraph(parcels={pid: graph.parcels[pid] for pid in keep})
    for pid in keep:
        sub.adjacency[pid] = [(j, d) for j, d in graph.adjacency[pid] if j in keep]
    return sub


def gaussian_kernel_weights(
    graph: SpatialGraph, bandwidth_m: float
) -> dict[tuple[int, int], float]:
    """Kernel-transformed edge weights exp(-(d/h)^2), keyed by (low id, high id).

    Reported as a statistic only; routing and adjacency always use the raw
    distance d.
    """
    if bandwidth_m <= 0:
        raise ValidationError(f"bandwidth must be > 0, got {bandwidth_m}")
    weights: dict[tuple[int, int], float] = {}
    for i, nbrs in graph.adjacency.items():
        for j, d in nbrs:
            if i < j:
                weights[(i, j)] = math.exp(-((d / bandwidth_m) ** 2))
    return weights


def to_geojson(
    graph: SpatialGraph, assignment: Mapping[int, LandUse] | None = None
) -> dict:
    """Point FeatureCollection with parcel properties.

    ``assignment`` maps readjusted parcel ids to their new land use; other
    parcels carry ``assigned_land_use: null``.
    """
    assignment = assignment or {}
    features = []
    for pid in graph.ids():
        p = graph.parcels[pid]
        new_use = assignment.get(pid)
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [p.x, p.y]},
                "properties": {
                    "id": p.id,
                    "land_use": p.land_use.value,
                    "area": p.area,
                    "assigned_land_use": new_use.value if new_use else None,
                },
            }
        )
    return {"type": "FeatureCollection", "features": features}


def serialize_adjacency(graph: SpatialGraph) -> str:
    """Adjacency CSV (source,target,distance_m), one row per directed edge."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["source", "target", "distance_m"])
    for pid in graph.ids():
        for j, d in graph.adjacency[pid]:
            writer.writerow([pid, j, repr(d)])
    return out.getvalue()


def parse_adjacency(text: str, parcels: dict[int, Parcel]) -> dict[int, list[tuple[int, float]]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["source", "target", "distance_m"]:
        raise ParseError(f"bad adjacency header {header!r}")
    adjacency: dict[int, list[tuple[int, float]]] = {pid: [] for pid in parcels}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise ParseError(f"line {lineno}: wrong number of fields")
        try:
            src, dst, d = int(row[0]), int(row[1]), float(row[2])
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        if src not in parcels or dst not in parcels:
            raise ValidationError(f"line {lineno}: edge references unknown parcel")
        adjacency[src].append((dst, d))
    for pid in adjacency:
        adjacency[pid].sort(key=lambda e: (e[1], e[0]))
    return adjacency
