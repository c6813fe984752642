"""Method evaluation on synthetic scenarios: single-cycle instances,
multi-cycle executions, hotspot mode versus baseline."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..dispatch.moa import (Assignment, DispatchReport, GoalWeights, MoaInstance,
                            solve_moa_iterative)
from ..dispatch.hotspot_mode import solve_seh_hillclimb
from ..dispatch.routing import Courier, Order
from ..embedding.store import EmbeddingTable
from ..indices import HppIndex
from ..network import FuId
from .city import Scenario
from .runner import CycleRunner

logger = logging.getLogger(__name__)

DEFAULT_CYCLE_S = 30.0


def synthetic_fleet(scenario: Scenario, count: int, seed: int,
                    capacity: int | None = None) -> list[Courier]:
    """A courier fleet of arbitrary size over the scenario's geography,
    biased toward merchant areas like the native fleet."""
    rng = np.random.default_rng(seed)
    aois = sorted(scenario.centroids)
    merchants = scenario.merchant_aois
    couriers = []
    for k in range(count):
        if rng.random() < 0.6:
            start = merchants[int(rng.integers(0, len(merchants)))]
        else:
            start = aois[int(rng.integers(0, len(aois)))]
        couriers.append(Courier(id=f"v{k:04d}", current_aoi=start,
                                capacity=capacity or scenario.config.courier_capacity))
    return couriers


def build_moa_instance(scenario: Scenario, table: EmbeddingTable | None,
                       max_orders: int | None = None, now: float | None = None,
                       couriers: list[Courier] | None = None,
                       **overrides) -> MoaInstance:
    """Single-cycle instance: the first ``max_orders`` of the stream against
    fresh couriers at their start AOIs."""
    orders = list(scenario.orders[:max_orders] if max_orders else scenario.orders)
    if couriers is None:
        couriers = [Courier(id=s.id, current_aoi=s.start_aoi, capacity=s.capacity)
                    for s in scenario.couriers]
    if now is None:
        now = min((o.placed_at for o in orders), default=0.0)
    hpp_index = HppIndex(table) if table is not None else None
    return MoaInstance(orders=orders, couriers=couriers, travel=scenario.travel,
                       hpp_index=hpp_index, now=now, **overrides)


def run_single_cycle(scenario: Scenario, table: EmbeddingTable | None,
                     method: str, max_orders: int | None = None,
                     **overrides) -> tuple[Assignment, DispatchReport]:
    instance = build_moa_instance(scenario, table, max_orders=max_orders, **overrides)
    return solve_moa_iterative(instance, use_scdn=(method == "scdn"))


def evaluate_pipeline(scenario: Scenario, table: EmbeddingTable | None,
                      methods: tuple[str, ...] = ("ruled", "scdn"),
                      max_orders: int | None = None,
                      **overrides) -> dict[str, DispatchReport]:
    """Paired single-cycle comparison of assignment methods."""
    reports = {}
    for method in methods:
        _, report = run_single_cycle(scenario, table, method,
                                     max_orders=max_orders, **overrides)
        reports[method] = report
    return reports


@dataclass
class SweepBucket:
    bucket: tuple[int, int]
    reports: dict[str, DispatchReport]


def order_size_sweep(scenario: Scenario, table: EmbeddingTable | None,
                     buckets: list[tuple[int, int]],
                     methods: tuple[str, ...] = ("ruled", "scdn"),
                     **overrides) -> list[SweepBucket]:
    """Re-run the cycle at the top of each (lo, hi] order-count bucket."""
    out = []
    for lo, hi in buckets:
        size = min(hi, len(scenario.orders))
        if size <= lo:
            logger.warning("sweep bucket (%d, %d] not reachable with %d orders",
                           lo, hi, len(scenario.orders))
        reports = evaluate_pipeline(scenario, table, methods,
                                    max_orders=size, **overrides)
        out.append(SweepBucket(bucket=(lo, hi), reports=reports))
    return out


# ---------------------------------------------------------------------------
# multi-cycle execution

def run_cycles(scenario: Scenario, table: EmbeddingTable | None, method: str,
               cycle_s: float = DEFAULT_CYCLE_S, candidate_limit: int = 20,
               weights: GoalWeights | None = None) -> tuple[CycleRunner, dict]:
    """Dispatch the whole stream in fixed cycles and execute the routes."""
    runner = CycleRunner(scenario)
    hpp_index = HppIndex(table) if table is not None else None
    weights = weights or GoalWeights()
    orders = sorted(scenario.orders, key=lambda o: (o.placed_at, o.id))
    t = orders[0].placed_at if orders else 0.0
    pending: list[Order] = []
    cursor = 0
    totals = {"total_md": 0.0, "md_evaluations": 0, "cycles": 0, "assigned": 0}

    while cursor < len(orders) or pending:
        while cursor < len(orders) and orders[cursor].placed_at <= t:
            pending.append(orders[cursor])
            cursor += 1
        runner.advance(t)
        if pending:
            couriers = [runner.courier_view(cid, t) for cid in sorted(runner.couriers)]
            instance = MoaInstance(orders=pending, couriers=couriers,
                                   travel=scenario.travel, hpp_index=hpp_index,
                                   weights=weights, now=t,
                                   candidate_limit=candidate_limit)
            assignment, report = solve_moa_iterative(instance, use_scdn=(method == "scdn"))
            totals["total_md"] += report.total_md
            totals["md_evaluations"] += report.md_evaluations
            totals["assigned"] += report.n_assigned
            by_courier: dict[str, list[Order]] = {}
            order_by_id = {o.id: o for o in pending}
            for entry in assignment.entries:
                by_courier.setdefault(entry.courier_id, []).extend(
                    order_by_id[oid] for oid in entry.order_ids)
            for cid in sorted(by_courier):
                runner.book(cid, sorted(by_courier[cid], key=lambda o: o.id), t)
            assigned_ids = {oid for e in assignment.entries for oid in e.order_ids}
            pending = [o for o in pending if o.id not in assigned_ids]
        totals["cycles"] += 1
        t += cycle_s
    runner.finish()
    metrics = runner.event_metrics()
    metrics.update(totals)
    return runner, metrics


def evaluate_seh_mode(scenario: Scenario, seh_groups: list[list[FuId]],
                      table: EmbeddingTable | None = None,
                      couriers_per_seh: int = 6,
                      cycle_s: float = DEFAULT_CYCLE_S,
                      hillclimb_seed: int = 0) -> dict:
    """Hotspot mode (dedicated couriers + local search) vs baseline dispatch.

    Orders inside a hotspot go to its dedicated courier group via the
    AOI-increment hill climber; everything else follows the ruled
    baseline.  Both modes execute the same stream."""
    group_of: dict[FuId, int] = {}
    for g, members in enumerate(seh_groups):
        for fu in members:
            group_of[fu] = g

    runner = CycleRunner(scenario)
    specs = sorted(scenario.couriers, key=lambda s: s.id)
    dedicated: dict[int, list[str]] = {}
    pool_ids = [s.id for s in specs]
    k = 0
    for g in range(len(seh_groups)):
        dedicated[g] = pool_ids[k:k + couriers_per_seh]
        k += couriers_per_seh
    outside_ids = pool_ids[k:] or pool_ids[-max(1, len(pool_ids) // 5):]

    orders = sorted(scenario.orders, key=lambda o: (o.placed_at, o.id))
    t = orders[0].placed_at if orders else 0.0
    cursor = 0
    pending: list[Order] = []
    while cursor < len(orders) or pending:
        while cursor < len(orders) and orders[cursor].placed_at <= t:
            pending.append(orders[cursor])
            cursor += 1
        runner.advance(t)
        leftovers: list[Order] = []
        for g in sorted(dedicated):
            mine = [o for o in pending if group_of.get(o.fu) == g]
            if not mine:
                continue
            group_couriers = [runner.courier_view(cid, t) for cid in dedicated[g]]
            assignment = solve_seh_hillclimb(mine, group_couriers,
                                             rng_seed=hillclimb_seed + g)
            by_courier: dict[str, list[Order]] = {}
            order_by_id = {o.id: o for o in mine}
            for entry in assignment.entries:
                by_courier.setdefault(entry.courier_id, []).extend(
                    order_by_id[oid] for oid in entry.order_ids)
            for cid in sorted(by_courier):
                runner.book(cid, sorted(by_courier[cid], key=lambda o: o.id), t)
            assigned = {oid for e in assignment.entries for oid in e.order_ids}
            leftovers.extend(o for o in mine if o.id not in assigned)
        outside = [o for o in pending if group_of.get(o.fu) is None] + leftovers
        if outside:
            couriers = [runner.courier_view(cid, t) for cid in outside_ids]
            instance = MoaInstance(orders=outside, couriers=couriers,
                                   travel=scenario.travel, hpp_index=None, now=t)
            assignment, _ = solve_moa_iterative(instance, use_scdn=False)
            by_courier = {}
            order_by_id = {o.id: o for o in outside}
            for entry in assignment.entries:
                by_courier.setdefault(entry.courier_id, []).extend(
                    order_by_id[oid] for oid in entry.order_ids)
            for cid in sorted(by_courier):
                runner.book(cid, sorted(by_courier[cid], key=lambda o: o.id), t)
            assigned = {oid for e in assignment.entries for oid in e.order_ids}
            unhandled = [o for o in outside if o.id not in assigned]
        else:
            unhandled = []
        pending = unhandled
        t += cycle_s
    runner.finish()
    return runner.event_metrics()
