"""Matching-degree scoring and the per-cycle assignment solvers.

The iterative solver alternates evaluation and greedy conflict-free
matching until every pending order is assigned (or the iteration cap
hits).  The HPP-driven variant combines high-affinity order pairs into
decision entities up front and drops couriers whose on-hand orders pool
poorly with the entity; the ruled variant bundles only by raw geography
and deadlines.  An exhaustive solver covers small instances exactly.
"""

from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..errors import ValidationError
from ..indices import HppIndex
from ..network import FuId, make_fu_id, parse_fu_id
from .routing import (Courier, InsertionPlan, OnHandOrder, Order, TravelModel,
                      ensure_route, plan_route_insertion)

logger = logging.getLogger(__name__)

INFEASIBLE = float("inf")

DEFAULT_P1 = 0.6   # bundle HPP floor
DEFAULT_P2 = 0.5   # courier recall HPP floor

Entity = tuple[Order, ...]


@dataclass(frozen=True)
class GoalWeights:
    efficiency: float = 0.6
    overtime: float = 0.3
    acceptance: float = 0.1

    def __post_init__(self):
        values = (self.efficiency, self.overtime, self.acceptance)
        if any(v < 0 for v in values):
            raise ValidationError("goal weights must be non-negative")
        if abs(sum(values) - 1.0) > 1e-9:
            raise ValidationError("goal weights must sum to 1")


@dataclass
class MoaInstance:
    orders: list[Order]
    couriers: list[Courier]
    travel: TravelModel
    hpp_index: HppIndex | None = None
    weights: GoalWeights = field(default_factory=GoalWeights)
    p1: float = DEFAULT_P1
    p2: float = DEFAULT_P2
    scale_m: float = 5000.0
    now: float = 0.0
    candidate_limit: int = 20
    iteration_cap: int = 10
    bundle_cap: int = 2
    ruled_delivery_radius_m: float = 1000.0
    ruled_deadline_gap_s: float = 600.0

    def __post_init__(self):
        if not (0.0 <= self.p1 <= 1.0 and 0.0 <= self.p2 <= 1.0):
            raise ValidationError("HPP thresholds must lie in [0, 1]")
        if self.scale_m <= 0:
            raise ValidationError("scale_m must be positive")
        if self.bundle_cap < 1:
            raise ValidationError("bundle_cap must be positive")


def effective_onhand_fu(courier: Courier, onhand: OnHandOrder) -> FuId:
    """FU used in HPP lookups for an on-hand order; once picked up, the
    leg starts from wherever the courier currently is."""
    order = onhand.order
    if not onhand.picked_up:
        return order.fu
    scenario = parse_fu_id(order.fu)[2]
    return make_fu_id(courier.current_aoi, order.delivery_aoi, scenario)


def _onhand_affinity(order: Order, courier: Courier, hpp_index: HppIndex | None) -> float:
    """Mean HPP between one order and the courier's on-hands (absent -> 0)."""
    if not courier.on_hand:
        return 1.0
    if hpp_index is None:
        return 0.0
    total = 0.0
    for oh in courier.on_hand:
        v = hpp_index.value(order.fu, effective_onhand_fu(courier, oh))
        total += 0.0 if v is None else v
    return total / len(courier.on_hand)


def md_score(courier: Courier, entity: Entity, instance: MoaInstance,
             plan: InsertionPlan | None = None) -> tuple[float, InsertionPlan | None]:
    """Matching degree of assigning the entity to the courier (lower is
    better): normalized incremental route distance, predicted overtime
    share, and an acceptance-willingness proxy from on-hand pooling
    affinity.  Bundles interact through insertion, so scores are not
    additive across orders."""
    if plan is None:
        plan = plan_route_insertion(courier, entity, instance.travel, instance.now)
    if plan is None:
        return INFEASIBLE, None
    w = instance.weights
    efficiency = plan.incremental_distance_m / instance.scale_m

    deadlines = {o.id: o.promised_deadline for o in entity}
    deadlines.update({oh.order.id: oh.order.promised_deadline for oh in courier.on_hand})
    completion = plan.route.completion_times
    late = sum(1 for oid, t in completion.items() if t > deadlines.get(oid, INFEASIBLE))
    overtime = late / len(completion) if completion else 0.0

    if courier.on_hand:
        willingness = sum(_onhand_affinity(o, courier, instance.hpp_index)
                          for o in entity) / len(entity)
    else:
        willingness = 1.0
    cost = w.efficiency * efficiency + w.overtime * overtime \
        + w.acceptance * (1.0 - willingness)
    return cost, plan


def combine_orders(pending: Sequence[Order], hpp_index: HppIndex | None,
                   p1: float = DEFAULT_P1) -> tuple[list[Entity], list[Order]]:
    """Pair pending orders by HPP: prune pairs strictly below the floor,
    then repeatedly keep the highest-affinity pair, removing both orders
    and any conflicting pair.  Unknown affinity counts as 0."""
    pending = sorted(pending, key=lambda o: o.id)
    pairs: list[tuple[float, str, str, Order, Order]] = []
    for a_idx, a in enumerate(pending):
        for b in pending[a_idx + 1:]:
            p = hpp_index.value_or_zero(a.fu, b.fu) if hpp_index is not None else 0.0
            if p < p1:
                continue
            pairs.append((p, a.id, b.id, a, b))
    pairs.sort(key=lambda row: (-row[0], row[1], row[2]))
    used: set[str] = set()
    bundles: list[Entity] = []
    for _p, ida, idb, a, b in pairs:
        if ida in used or idb in used:
            continue
        used.update((ida, idb))
        bundles.append((a, b))
    singles = [o for o in pending if o.id not in used]
    return bundles, singles


def ruled_pairs(pending: Sequence[Order], travel: TravelModel,
                delivery_radius_m: float = 1000.0,
                deadline_gap_s: float = 600.0) -> tuple[list[Entity], list[Order]]:
    """Baseline bundling: same pickup AOI, delivery centroids within the
    radius, promised deadlines within the gap."""
    pending = sorted(pending, key=lambda o: o.id)
    pairs: list[tuple[float, str, str, Order, Order]] = []
    for a_idx, a in enumerate(pending):
        for b in pending[a_idx + 1:]:
            if a.pickup_aoi != b.pickup_aoi:
                continue
            if abs(a.promised_deadline - b.promised_deadline) > deadline_gap_s:
                continue
            dist = travel.distance(a.delivery_aoi, b.delivery_aoi)
            if dist > delivery_radius_m:
                continue
            pairs.append((dist, a.id, b.id, a, b))
    pairs.sort(key=lambda row: (row[0], row[1], row[2]))
    used: set[str] = set()
    bundles: list[Entity] = []
    for _d, ida, idb, a, b in pairs:
        if ida in used or idb in used:
            continue
        used.update((ida, idb))
        bundles.append((a, b))
    singles = [o for o in pending if o.id not in used]
    return bundles, singles


def recall_couriers(entity: Entity, candidates: Sequence[Courier],
                    hpp_index: HppIndex | None, p2: float = DEFAULT_P2,
                    ) -> list[Courier]:
    """Drop couriers whose on-hand orders pool poorly with the entity.

    A courier with no on-hand orders always passes; otherwise each entity
    member's mean on-hand HPP must reach the floor (strict drop below)."""
    kept = []
    for courier in candidates:
        if not courier.on_hand:
            kept.append(courier)
            continue
        if all(_onhand_affinity(o, courier, hpp_index) >= p2 for o in entity):
            kept.append(courier)
    return kept


def base_recall(entity: Entity, couriers: Sequence[Courier], travel: TravelModel,
                limit: int) -> list[Courier]:
    """Proximity recall: nearest couriers (to the entity's first pickup)
    that still have capacity for the whole entity."""
    anchor = entity[0].pickup_aoi
    scored = []
    for courier in couriers:
        if len(courier.on_hand) + len(entity) > courier.capacity:
            continue
        scored.append((travel.distance(courier.current_aoi, anchor), courier.id, courier))
    scored.sort(key=lambda row: (row[0], row[1]))
    return [row[2] for row in scored[:limit]]


def _batched_recall(entities: Sequence[Entity], couriers: Sequence[Courier],
                    travel: TravelModel, limit: int) -> list[list[Courier]]:
    """base_recall for every entity at once (vectorized haversine)."""
    from ..kernels import haversine_many

    if not couriers:
        return [[] for _ in entities]
    lat = np.array([travel.point(c.current_aoi)[0] for c in couriers])
    lon = np.array([travel.point(c.current_aoi)[1] for c in couriers])
    room = np.array([c.capacity - len(c.on_hand) for c in couriers])
    ids = np.array([c.id for c in couriers])
    pools: list[list[Courier]] = []
    for entity in entities:
        a_lat, a_lon = travel.point(entity[0].pickup_aoi)
        dist = haversine_many(lat, lon, a_lat, a_lon)
        dist = np.where(room >= len(entity), dist, np.inf)
        order = np.lexsort((ids, dist))
        pool = [couriers[k] for k in order[:limit] if np.isfinite(dist[k])]
        pools.append(pool)
    return pools


@dataclass
class AssignmentEntry:
    order_ids: tuple[str, ...]
    courier_id: str
    score: float


@dataclass
class Assignment:
    entries: list[AssignmentEntry]
    unassigned: list[str]
    total_cost: float
    partial: bool

    def validate(self, orders: Sequence[Order]) -> None:
        seen: set[str] = set()
        for entry in self.entries:
            for oid in entry.order_ids:
                if oid in seen:
                    raise ValidationError(f"order {oid} assigned twice")
                seen.add(oid)
        for oid in self.unassigned:
            if oid in seen:
                raise ValidationError(f"order {oid} both assigned and unassigned")
        expected = {o.id for o in orders}
        if seen | set(self.unassigned) != expected:
            raise ValidationError("assignment does not cover the order set")


@dataclass
class DispatchReport:
    method: str
    total_md: float
    md_evaluations: int
    iterations: int
    wall_time_s: float
    combination_histogram: dict[int, int]
    n_orders: int
    n_assigned: int

    @property
    def single_order_share(self) -> float:
        total = sum(self.combination_histogram.values())
        return self.combination_histogram.get(1, 0) / total if total else 0.0

    def canonical_dict(self) -> dict:
        """Deterministic content (timing excluded)."""
        return {
            "method": self.method,
            "total_md": round(self.total_md, 9),
            "md_evaluations": self.md_evaluations,
            "iterations": self.iterations,
            "combination_histogram": {str(k): v for k, v in
                                      sorted(self.combination_histogram.items())},
            "n_orders": self.n_orders,
            "n_assigned": self.n_assigned,
            "single_order_share": round(self.single_order_share, 9),
        }


def solve_moa_iterative(instance: MoaInstance, use_scdn: bool,
                        ) -> tuple[Assignment, DispatchReport]:
    """Evaluation -> greedy matching -> courier update, repeated on the
    unassigned remainder.  Courier state is worked on copies; the caller's
    instance is untouched."""
    t_start = time.perf_counter()
    couriers = [c.clone() for c in instance.couriers]
    for c in couriers:
        ensure_route(c, instance.travel, instance.now)
    pending = sorted(instance.orders, key=lambda o: o.id)
    entries: list[AssignmentEntry] = []
    evaluations = 0
    iterations = 0
    assigned_per_courier: dict[str, int] = {}

    bundling_active = True
    while pending and iterations < instance.iteration_cap:
        iterations += 1
        if not bundling_active:
            bundles, singles = [], list(pending)
        elif use_scdn:
            bundles, singles = combine_orders(pending, instance.hpp_index, instance.p1)
        else:
            bundles, singles = ruled_pairs(pending, instance.travel,
                                           instance.ruled_delivery_radius_m,
                                           instance.ruled_deadline_gap_s)
        entities: list[Entity] = bundles + [(o,) for o in singles]

        candidates: list[tuple[float, tuple[str, ...], str, int, int, InsertionPlan]] = []
        courier_by_id = {c.id: c for c in couriers}
        pools = _batched_recall(entities, couriers, instance.travel,
                                instance.candidate_limit)
        for e_idx, entity in enumerate(entities):
            pool = pools[e_idx]
            if use_scdn:
                filtered = recall_couriers(entity, pool, instance.hpp_index, instance.p2)
                # pruning saves evaluations; it must not strand an order
                pool = filtered if filtered else pool
            ids = tuple(o.id for o in entity)
            for courier in pool:
                cost, plan = md_score(courier, entity, instance)
                evaluations += 1
                if cost < INFEASIBLE:
                    candidates.append((cost, ids, courier.id, e_idx, 0, plan))

        candidates.sort(key=lambda row: (row[0], row[1], row[2]))
        matched_entities: set[int] = set()
        matched_couriers: set[str] = set()
        progressed = False
        for cost, ids, courier_id, e_idx, _z, plan in candidates:
            if e_idx in matched_entities or courier_id in matched_couriers:
                continue
            matched_entities.add(e_idx)
            matched_couriers.add(courier_id)
            courier = courier_by_id[courier_id]
            courier.on_hand = list(courier.on_hand) + \
                [OnHandOrder(order=o, picked_up=False) for o in entities[e_idx]]
            courier.route = plan.route
            entries.append(AssignmentEntry(order_ids=ids, courier_id=courier_id,
                                           score=cost))
            assigned_per_courier[courier_id] = \
                assigned_per_courier.get(courier_id, 0) + len(ids)
            progressed = True
        assigned_ids = {oid for entry in entries for oid in entry.order_ids}
        pending = [o for o in pending if o.id not in assigned_ids]
        if not progressed:
            if bundling_active and bundles:
                bundling_active = False  # retry the remainder as singles
                continue
            break

    if pending:
        logger.warning("dispatch cycle left %d orders unassigned", len(pending))
    histogram: dict[int, int] = {}
    for count in assigned_per_courier.values():
        histogram[count] = histogram.get(count, 0) + 1
    assignment = Assignment(entries=entries,
                            unassigned=sorted(o.id for o in pending),
                            total_cost=sum(e.score for e in entries),
                            partial=bool(pending))
    report = DispatchReport(method="scdn" if use_scdn else "ruled",
                            total_md=assignment.total_cost,
                            md_evaluations=evaluations,
                            iterations=iterations,
                            wall_time_s=time.perf_counter() - t_start,
                            combination_histogram=histogram,
                            n_orders=len(instance.orders),
                            n_assigned=len(instance.orders) - len(pending))
    return assignment, report


@dataclass(frozen=True)
class ExactCaps:
    orders: int = 6
    couriers: int = 5
    bundle: int = 3


def _set_partitions(items: list, max_block: int):
    """All partitions of ``items`` into blocks of bounded size, in a
    deterministic order (first item opens or joins blocks left to right)."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for partial in _set_partitions(rest, max_block):
        for k in range(len(partial)):
            if len(partial[k]) < max_block:
                yield partial[:k] + [partial[k] + [first]] + partial[k + 1:]
        yield [[first]] + partial


def solve_moa_exact(instance: MoaInstance, caps: ExactCaps = ExactCaps(),
                    ) -> Assignment:
    """Minimum-cost single-round assignment by full enumeration.

    Every partition of the orders into bundles (up to the instance's
    bundle size, within the enumeration guard) is paired with every
    injective bundle-to-courier mapping; scores come from the couriers'
    initial states.  Ties break on the canonical encoding."""
    if len(instance.orders) > caps.orders:
        raise ValidationError(f"exact solver capped at {caps.orders} orders")
    if len(instance.couriers) > caps.couriers:
        raise ValidationError(f"exact solver capped at {caps.couriers} couriers")
    max_block = min(instance.bundle_cap, caps.bundle)
    couriers = [c.clone() for c in instance.couriers]
    for c in couriers:
        ensure_route(c, instance.travel, instance.now)
    orders = sorted(instance.orders, key=lambda o: o.id)

    score_cache: dict[tuple[tuple[str, ...], str], float] = {}

    def bundle_cost(block: tuple[Order, ...], courier: Courier) -> float:
        key = (tuple(o.id for o in block), courier.id)
        if key not in score_cache:
            score_cache[key] = md_score(courier, block, instance)[0]
        return score_cache[key]

    best: tuple[float, tuple, list[AssignmentEntry]] | None = None
    for partition in _set_partitions(orders, max_block):
        blocks = [tuple(sorted(block, key=lambda o: o.id)) for block in partition]
        blocks.sort(key=lambda b: b[0].id)
        if len(blocks) > len(couriers):
            continue
        for chosen in itertools.permutations(couriers, len(blocks)):
            total = 0.0
            feasible = True
            for block, courier in zip(blocks, chosen):
                cost = bundle_cost(block, courier)
                if cost == INFEASIBLE:
                    feasible = False
                    break
                total += cost
            if not feasible:
                continue
            key = tuple((tuple(o.id for o in block), courier.id)
                        for block, courier in zip(blocks, chosen))
            if best is None or total < best[0] - 1e-12 or \
                    (abs(total - best[0]) <= 1e-12 and key < best[1]):
                entries = [AssignmentEntry(order_ids=tuple(o.id for o in block),
                                           courier_id=courier.id,
                                           score=bundle_cost(block, courier))
                           for block, courier in zip(blocks, chosen)]
                best = (total, key, entries)

    if best is None:
        return Assignment(entries=[], unassigned=[o.id for o in orders],
                          total_cost=0.0, partial=True)
    return Assignment(entries=best[2], unassigned=[], total_cost=best[0], partial=False)
