"""Flow-unit network construction from courier trajectories.

A flow unit (FU) is a directed pickup-AOI -> delivery-AOI pair within a
scenario (weekday/weekend x peak/idle).  Skilled-courier trajectories are
segmented into sessions, turned into typed FU sequences, and merged into
an attributed multiplex graph with pickup-typed and delivery-typed edges.
"""

from __future__ import annotations

import itertools
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .kernels import haversine_m

logger = logging.getLogger(__name__)

FuId = str
AoiId = str
OrderId = str
CourierId = str

SCENARIO_TAGS = ("weekday-peak", "weekday-idle", "weekend-peak", "weekend-idle")
EDGE_TYPES = ("pickup", "delivery")

DEFAULT_GAP_THRESHOLD_S = 30 * 60
DEFAULT_DISTANCE_THRESHOLD_M = 1000.0

SC_RANK_LOW = 0.05   # exclusive: the very top couriers are excluded
SC_RANK_HIGH = 0.35  # inclusive

BARRIER_TYPES = ("bridge", "river", "highway")

# Attribute vector layout; one fixed slot per statistic.
ATTR_FIELDS = (
    "fu_volume",
    "pickup_aoi_volume",
    "delivery_aoi_volume",
    "pickup_duration",
    "delivery_duration",
    "delivery_distance",
    "order_to_delivery",
    "barrier_count",
    "barrier_bridge",
    "barrier_river",
    "barrier_highway",
    "pickup_lat",
    "pickup_lon",
    "delivery_lat",
    "delivery_lon",
    "pickup_pref",
    "delivery_pref",
)
ATTR_DIM = len(ATTR_FIELDS)


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0 and -180.0 <= self.lon <= 180.0):
            raise ValidationError(f"coordinates out of range: ({self.lat}, {self.lon})")


def make_fu_id(pickup_aoi: AoiId, delivery_aoi: AoiId, scenario: str) -> FuId:
    return f"{pickup_aoi}>{delivery_aoi}@{scenario}"


def parse_fu_id(fu: FuId) -> tuple[AoiId, AoiId, str]:
    route, _, scenario = fu.partition("@")
    pickup, _, delivery = route.partition(">")
    if not pickup or not delivery or not scenario:
        raise ValidationError(f"malformed flow-unit id: {fu!r}")
    return pickup, delivery, scenario


@dataclass(frozen=True)
class FlowUnit:
    """Directed pickup->delivery AOI pair within one scenario."""

    pickup_aoi: AoiId
    delivery_aoi: AoiId
    scenario: str

    @property
    def id(self) -> FuId:
        return make_fu_id(self.pickup_aoi, self.delivery_aoi, self.scenario)

    @staticmethod
    def from_id(fu: FuId) -> "FlowUnit":
        return FlowUnit(*parse_fu_id(fu))


@dataclass(frozen=True)
class TrajectoryEvent:
    courier_id: CourierId
    order_id: OrderId
    fu: FuId
    action: str  # "pickup" | "delivery"
    timestamp: float


@dataclass(frozen=True)
class SessionFlags:
    overtime: bool = False
    speeding: bool = False
    negative_feedback: bool = False

    @property
    def clean(self) -> bool:
        return not (self.overtime or self.speeding or self.negative_feedback)


@dataclass
class Session:
    courier_id: CourierId
    events: list[TrajectoryEvent]
    flags: SessionFlags = field(default_factory=SessionFlags)

    def max_gap(self) -> float:
        ts = [e.timestamp for e in self.events]
        return max((b - a for a, b in zip(ts, ts[1:])), default=0.0)


def segment_sessions(events: Sequence[TrajectoryEvent],
                     gap_threshold_s: float = DEFAULT_GAP_THRESHOLD_S) -> list[Session]:
    """Split one courier's time-ordered events at gaps strictly above the threshold."""
    if gap_threshold_s <= 0:
        raise ValidationError("gap_threshold_s must be positive")
    if not events:
        return []
    courier = events[0].courier_id
    for prev, cur in zip(events, events[1:]):
        if cur.timestamp < prev.timestamp:
            raise ValidationError("trajectory events must be sorted by timestamp")
        if cur.courier_id != courier:
            raise ValidationError("segment_sessions expects a single courier's events")
    sessions: list[Session] = []
    current = [events[0]]
    for prev, cur in zip(events, events[1:]):
        if cur.timestamp - prev.timestamp > gap_threshold_s:
            sessions.append(Session(courier, current))
            current = []
        current.append(cur)
    sessions.append(Session(courier, current))
    return sessions


def filter_sc_sessions(sessions: Iterable[Session],
                       courier_rank: Mapping[CourierId, float],
                       flags: Sequence[SessionFlags] | None = None,
                       gap_threshold_s: float = DEFAULT_GAP_THRESHOLD_S) -> list[Session]:
    """Keep sessions of skilled couriers: efficiency rank in (0.05, 0.35],
    all behaviour flags clean, and no intra-session gap above the threshold.
    """
    sessions = list(sessions)
    if flags is not None and len(flags) != len(sessions):
        raise ValidationError("flags must align one-to-one with sessions")
    kept = []
    for idx, session in enumerate(sessions):
        rank = courier_rank.get(session.courier_id)
        if rank is None or not (0.0 <= rank <= 1.0):
            raise ValidationError(f"invalid rank for courier {session.courier_id!r}")
        session_flags = flags[idx] if flags is not None else session.flags
        if not (SC_RANK_LOW < rank <= SC_RANK_HIGH):
            continue
        if not session_flags.clean:
            continue
        if session.max_gap() > gap_threshold_s:
            continue
        kept.append(session)
    return kept


def build_fu_sequences(session: Session) -> tuple[list[FuId], list[FuId]]:
    """Pickup-ordered and delivery-ordered FU sequences of one session,
    with consecutive duplicates collapsed."""
    def seq(action: str) -> list[FuId]:
        out: list[FuId] = []
        for event in sorted((e for e in session.events if e.action == action),
                            key=lambda e: (e.timestamp, e.order_id)):
            if not out or out[-1] != event.fu:
                out.append(event.fu)
        return out

    return seq("pickup"), seq("delivery")


@dataclass
class Amhen:
    """Attributed multiplex graph over flow units.

    Nodes are sorted FU ids; ``attrs`` rows align with ``fus``; each edge
    type is a dict mapping an index pair (i < j) to a co-occurrence count.
    """

    fus: list[FuId]
    attrs: np.ndarray
    edges: dict[str, dict[tuple[int, int], int]]
    regions: np.ndarray

    def __post_init__(self):
        self.index = {fu: i for i, fu in enumerate(self.fus)}

    @property
    def n_nodes(self) -> int:
        return len(self.fus)

    def region_of(self, fu: FuId) -> int:
        return int(self.regions[self.index[fu]])

    def neighbor_lists(self, edge_type: str) -> list[list[tuple[int, int]]]:
        """Per-node list of (neighbor, count) pairs."""
        nbrs: list[list[tuple[int, int]]] = [[] for _ in range(self.n_nodes)]
        for (i, j), c in self.edges[edge_type].items():
            nbrs[i].append((j, c))
            nbrs[j].append((i, c))
        for lst in nbrs:
            lst.sort()
        return nbrs

    def csr(self, edge_type: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """CSR (indptr, indices, per-row cumulative transition probabilities)."""
        nbrs = self.neighbor_lists(edge_type)
        indptr = np.zeros(self.n_nodes + 1, dtype=np.int64)
        indices: list[int] = []
        cumprob: list[float] = []
        for i, lst in enumerate(nbrs):
            total = float(sum(c for _, c in lst))
            acc = 0.0
            for j, c in lst:
                acc += c / total
                indices.append(j)
                cumprob.append(acc)
            indptr[i + 1] = len(indices)
        return indptr, np.asarray(indices, dtype=np.int64), np.asarray(cumprob)

    def validate(self) -> None:
        n = self.n_nodes
        if self.attrs.shape != (n, self.attrs.shape[1]):
            raise ValidationError("attribute matrix shape mismatch")
        if not np.isfinite(self.attrs).all():
            raise ValidationError("attribute matrix contains non-finite values")
        for edge_type, counts in self.edges.items():
            for (i, j), c in counts.items():
                if not (0 <= i < j < n):
                    raise ValidationError(f"{edge_type} edge ({i},{j}) references missing node")
                if c < 1:
                    raise ValidationError(f"{edge_type} edge ({i},{j}) has count {c}")
        if self.regions.shape != (n,):
            raise ValidationError("region assignment shape mismatch")


def _connected_components(n: int, edge_sets: Iterable[dict[tuple[int, int], int]]) -> list[int]:
    parent = list(range(n))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for edges in edge_sets:
        for i, j in edges:
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
    return [find(i) for i in range(n)]


def partition_regions(amhen: "Amhen") -> dict[FuId, int]:
    """Connected components of the pickup+delivery union, labeled 0..R-1
    in order of each component's smallest FU id."""
    roots = _connected_components(amhen.n_nodes, amhen.edges.values())
    root_to_min_fu: dict[int, FuId] = {}
    for i, root in enumerate(roots):
        fu = amhen.fus[i]
        if root not in root_to_min_fu or fu < root_to_min_fu[root]:
            root_to_min_fu[root] = fu
    ordered_roots = sorted(root_to_min_fu, key=root_to_min_fu.get)
    region_of_root = {root: r for r, root in enumerate(ordered_roots)}
    return {amhen.fus[i]: region_of_root[roots[i]] for i in range(amhen.n_nodes)}


def standardize_per_region(attrs: np.ndarray, regions: np.ndarray) -> np.ndarray:
    """Z-score each attribute column within each region; constant columns map to 0."""
    out = np.zeros_like(attrs, dtype=np.float64)
    for region in np.unique(regions):
        rows = regions == region
        block = attrs[rows]
        mean = block.mean(axis=0)
        std = block.std(axis=0)
        std[std == 0.0] = 1.0
        out[rows] = (block - mean) / std
    return out


def build_amhen(sequences: Iterable[tuple[list[FuId], list[FuId]]],
                attributes: Mapping[FuId, np.ndarray],
                standardize: bool = True) -> Amhen:
    """Merge typed FU sequences into the multiplex graph.

    Adjacent FUs in a pickup sequence increment that pair's pickup-edge
    count, likewise for delivery; storage is undirected.  Attributes are
    z-scored per region (connected component) once topology is known.
    """
    sequences = list(sequences)
    seen: set[FuId] = set()
    for pickup_seq, delivery_seq in sequences:
        seen.update(pickup_seq)
        seen.update(delivery_seq)
    fus = sorted(seen)
    index = {fu: i for i, fu in enumerate(fus)}

    dim = None
    for fu in fus:
        if fu not in attributes:
            raise ValidationError(f"no attribute vector for flow unit {fu!r}")
        vec = np.asarray(attributes[fu], dtype=np.float64)
        if dim is None:
            dim = vec.shape[0]
        elif vec.shape != (dim,):
            raise ValidationError(f"attribute dimension mismatch for {fu!r}")
    attrs = (np.array([np.asarray(attributes[fu], dtype=np.float64) for fu in fus])
             if fus else np.zeros((0, dim or ATTR_DIM)))

    edges: dict[str, dict[tuple[int, int], int]] = {t: Counter() for t in EDGE_TYPES}
    for pickup_seq, delivery_seq in sequences:
        for edge_type, seq in (("pickup", pickup_seq), ("delivery", delivery_seq)):
            for a, b in zip(seq, seq[1:]):
                if a == b:
                    continue  # collapsed upstream; never store self-loops
                i, j = sorted((index[a], index[b]))
                edges[edge_type][(i, j)] += 1

    amhen = Amhen(fus=fus, attrs=attrs,
                  edges={t: dict(edges[t]) for t in EDGE_TYPES},
                  regions=np.zeros(len(fus), dtype=np.int64))
    assignment = partition_regions(amhen)
    amhen.regions = np.array([assignment[fu] for fu in fus], dtype=np.int64)
    if standardize and fus:
        amhen.attrs = standardize_per_region(amhen.attrs, amhen.regions)
    amhen.validate()
    return amhen


@dataclass
class ExtendedNetwork:
    """Geographic FU adjacency used for cold-start estimation."""

    adjacency: dict[FuId, list[FuId]]
    excluded: list[FuId]


def build_extended_network(fus: Iterable[FlowUnit],
                           centroids: Mapping[AoiId, GeoPoint],
                           distance_threshold_m: float = DEFAULT_DISTANCE_THRESHOLD_M,
                           ) -> ExtendedNetwork:
    """FUs are adjacent when they share a pickup AOI and their delivery
    centroids lie strictly under the threshold; FUs left without neighbors
    fall back to everything sharing their pickup AOI."""
    if distance_threshold_m <= 0:
        raise ValidationError("distance_threshold_m must be positive")
    excluded: list[FuId] = []
    usable: list[FlowUnit] = []
    for fu in fus:
        if fu.pickup_aoi not in centroids or fu.delivery_aoi not in centroids:
            excluded.append(fu.id)
            logger.warning("extended network: unknown centroid for %s", fu.id)
            continue
        usable.append(fu)

    by_pickup: dict[tuple[AoiId, str], list[FlowUnit]] = defaultdict(list)
    for fu in usable:
        by_pickup[(fu.pickup_aoi, fu.scenario)].append(fu)

    adjacency: dict[FuId, list[FuId]] = {fu.id: [] for fu in usable}
    for group in by_pickup.values():
        group = sorted(group, key=lambda f: f.id)
        for a, b in itertools.combinations(group, 2):
            pa, pb = centroids[a.delivery_aoi], centroids[b.delivery_aoi]
            if haversine_m(pa.lat, pa.lon, pb.lat, pb.lon) < distance_threshold_m:
                adjacency[a.id].append(b.id)
                adjacency[b.id].append(a.id)
        for fu in group:
            if not adjacency[fu.id] and len(group) > 1:
                adjacency[fu.id] = [o.id for o in group if o.id != fu.id]
    for lst in adjacency.values():
        lst.sort()
    return ExtendedNetwork(adjacency=adjacency, excluded=sorted(excluded))


# ---------------------------------------------------------------------------
# node attributes

@dataclass(frozen=True)
class OrderRecord:
    """One historical order used for attribute statistics."""

    order_id: OrderId
    fu: FuId
    pickup_aoi: AoiId
    delivery_aoi: AoiId
    scenario: str
    placed_at: float
    pickup_at: float
    delivered_at: float
    delivery_distance_m: float
    promised_deadline: float = math.inf


@dataclass
class BarrierInfo:
    count: int = 0
    types: tuple[str, ...] = ()


@dataclass
class AoiStats:
    """Platform-side statistics that do not derive from the order stream."""

    centroids: dict[AoiId, GeoPoint]
    pickup_pref: dict[AoiId, float] = field(default_factory=dict)
    delivery_pref: dict[AoiId, float] = field(default_factory=dict)
    barriers: dict[FuId, BarrierInfo] = field(default_factory=dict)


@dataclass
class AttributeTable:
    vectors: dict[FuId, np.ndarray]
    flagged: set[FuId]


def compute_node_attributes(order_history: Iterable[OrderRecord],
                            aoi_stats: AoiStats,
                            scenario: str,
                            fus: Sequence[FuId] | None = None,
                            regions: Mapping[FuId, int] | None = None,
                            window_days: float = 30.0) -> AttributeTable:
    """Per-FU attribute vectors for one scenario.

    Volumes are orders per day over the window; durations and distances
    are means over the scenario's orders.  Missing statistics are imputed
    with the regional mean (global when ``regions`` is None) and the FU is
    flagged.  Vectors are returned raw; standardization happens at graph
    construction where regions are known.
    """
    if scenario not in SCENARIO_TAGS:
        raise ValidationError(f"unknown scenario tag {scenario!r}")
    records = [r for r in order_history if r.scenario == scenario]
    if fus is None:
        fus = sorted({r.fu for r in records})
    fus = list(fus)

    per_fu: dict[FuId, list[OrderRecord]] = defaultdict(list)
    per_pickup: dict[AoiId, list[OrderRecord]] = defaultdict(list)
    per_delivery: dict[AoiId, list[OrderRecord]] = defaultdict(list)
    for r in records:
        per_fu[r.fu].append(r)
        per_pickup[r.pickup_aoi].append(r)
        per_delivery[r.delivery_aoi].append(r)

    def mean(values: list[float]) -> float:
        return sum(values) / len(values) if values else np.nan

    n = len(fus)
    raw = np.full((n, ATTR_DIM), np.nan)
    for row, fu in enumerate(fus):
        pickup_aoi, delivery_aoi, _ = parse_fu_id(fu)
        mine = per_fu.get(fu, [])
        at_pickup = per_pickup.get(pickup_aoi, [])
        at_delivery = per_delivery.get(delivery_aoi, [])
        raw[row, 0] = len(mine) / window_days
        raw[row, 1] = len(at_pickup) / window_days
        raw[row, 2] = len(at_delivery) / window_days
        raw[row, 3] = mean([r.pickup_at - r.placed_at for r in at_pickup])
        raw[row, 4] = mean([r.delivered_at - r.pickup_at for r in at_delivery])
        raw[row, 5] = mean([r.delivery_distance_m for r in mine])
        raw[row, 6] = mean([r.delivered_at - r.placed_at for r in mine])
        barrier = aoi_stats.barriers.get(fu)
        if barrier is not None:
            raw[row, 7] = barrier.count
            for k, name in enumerate(BARRIER_TYPES):
                raw[row, 8 + k] = barrier.types.count(name)
        pc = aoi_stats.centroids.get(pickup_aoi)
        dc = aoi_stats.centroids.get(delivery_aoi)
        if pc is not None:
            raw[row, 11], raw[row, 12] = pc.lat, pc.lon
        if dc is not None:
            raw[row, 13], raw[row, 14] = dc.lat, dc.lon
        if pickup_aoi in aoi_stats.pickup_pref:
            raw[row, 15] = aoi_stats.pickup_pref[pickup_aoi]
        if delivery_aoi in aoi_stats.delivery_pref:
            raw[row, 16] = aoi_stats.delivery_pref[delivery_aoi]

    region_ids = np.array([regions[fu] if regions else 0 for fu in fus], dtype=np.int64) \
        if n else np.zeros(0, dtype=np.int64)
    flagged: set[FuId] = set()
    for region in np.unique(region_ids):
        rows = np.nonzero(region_ids == region)[0]
        block = raw[rows]
        missing = np.isnan(block)
        if missing.any():
            for row in rows[missing.any(axis=1)]:
                flagged.add(fus[row])
            counts = (~missing).sum(axis=0)
            sums = np.where(missing, 0.0, block).sum(axis=0)
            fill = np.divide(sums, counts, out=np.zeros(block.shape[1]),
                             where=counts > 0)  # all-missing columns impute 0
            block[missing] = np.broadcast_to(fill, block.shape)[missing]
            raw[rows] = block

    vectors = {fu: raw[i].copy() for i, fu in enumerate(fus)}
    return AttributeTable(vectors=vectors, flagged=flagged)
