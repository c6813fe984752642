"""Skilled-courier trajectory synthesis.

Couriers batch orders that share a pickup neighborhood and deliver to
nearby destinations inside a short holding window, which makes corridor
orders co-occur in their pickup and delivery sequences.  Acceptance is
deadline-guarded, so the emitted sessions pass the skilled-courier
filters by construction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..dispatch.routing import Courier, OnHandOrder, Order
from ..kernels import haversine_m
from ..network import OrderRecord, TrajectoryEvent
from .city import CourierSpec, Scenario
from .runner import CycleRunner, _SimCourier

logger = logging.getLogger(__name__)

BATCH_HOLD_S = 240.0
PICKUP_RADIUS_M = 500.0
DELIVERY_RADIUS_M = 2200.0  # spans a corridor's two delivery lobes
DEADLINE_MARGIN_S = 180.0


@dataclass
class TrajectoryData:
    events: list[TrajectoryEvent]
    history: list[OrderRecord]
    courier_rank: dict[str, float]
    overflow_couriers: list[str] = field(default_factory=list)


@dataclass
class _Batch:
    orders: list[Order]
    opened_at: float


def generate_sc_trajectories(scenario: Scenario) -> TrajectoryData:
    """Simulate skilled couriers serving the scenario's order stream."""
    travel = scenario.travel
    runner = CycleRunner(scenario)
    rank = {spec.id: spec.rank for spec in scenario.couriers}
    batches: dict[str, _Batch] = {}
    overflow: list[str] = []

    def dispatch_batch(courier_id: str, now: float) -> None:
        batch = batches.pop(courier_id, None)
        if batch is None:
            return
        runner.book(courier_id, sorted(batch.orders, key=lambda o: o.id), now)

    def predicted_ok(sim, batch_orders: list[Order], dispatch_time: float) -> bool:
        """Replay exactly what booking at dispatch time will do: project the
        courier's task completions up to then, replan the remainder plus the
        batch, and require every delivery to clear its deadline with margin."""
        from ..dispatch.routing import _insert_order_tasks, build_route

        courier = sim.courier
        position = courier.current_aoi
        free_at = sim.free_at
        on_hand = {oh.order.id: oh for oh in courier.on_hand}
        for task, t in zip(sim.pending_tasks, sim.task_times):
            if t > dispatch_time:
                break
            position = task.aoi
            free_at = t
            if task.kind == "pickup":
                oh = on_hand[task.order_id]
                on_hand[task.order_id] = OnHandOrder(order=oh.order, picked_up=True)
            else:
                on_hand.pop(task.order_id, None)

        merged = [(oh.order, oh.picked_up) for oh in on_hand.values()]
        merged += [(o, False) for o in batch_orders]
        tasks = []
        for order, picked in sorted(merged, key=lambda x: x[0].id):
            tasks = _insert_order_tasks(tasks, order, picked, position, travel)
        start = max(dispatch_time, free_at)
        route = build_route(tasks, position, travel, start)
        deadlines = {o.id: o.promised_deadline for o in batch_orders}
        deadlines.update({oh.order.id: oh.order.promised_deadline
                          for oh in on_hand.values()})
        for k, (task, t) in enumerate(zip(route.tasks, route.task_times)):
            if task.kind != "delivery":
                continue
            with_service = t + runner.service_time_s * (k + 1)
            if with_service > deadlines[task.order_id] - DEADLINE_MARGIN_S:
                return False
        return True

    def batch_fits(courier_id: str, order: Order, now: float) -> bool:
        batch = batches.get(courier_id)
        if batch is None:
            return False
        sim = runner.couriers[courier_id]
        if len(batch.orders) + len(sim.courier.on_hand) >= sim.courier.capacity:
            return False
        anchor = batch.orders[0]
        pa = travel.point(anchor.pickup_aoi)
        pb = travel.point(order.pickup_aoi)
        if haversine_m(pa[0], pa[1], pb[0], pb[1]) > PICKUP_RADIUS_M:
            return False
        da = travel.point(anchor.delivery_aoi)
        db = travel.point(order.delivery_aoi)
        if haversine_m(da[0], da[1], db[0], db[1]) > DELIVERY_RADIUS_M:
            return False
        return predicted_ok(sim, batch.orders + [order], batch.opened_at + BATCH_HOLD_S)

    next_overflow = 0
    for order in scenario.orders:
        now = order.placed_at
        for courier_id in [cid for cid, b in list(batches.items())
                           if b.opened_at + BATCH_HOLD_S <= now]:
            dispatch_batch(courier_id, batches[courier_id].opened_at + BATCH_HOLD_S)
        runner.advance(now)

        # join an open compatible batch if possible
        fits = sorted(cid for cid in batches if batch_fits(cid, order, now))
        if fits:
            batches[fits[0]].orders.append(order)
            continue
        # otherwise seed a new batch: idle couriers first, but a courier
        # still delivering may take a follow-up batch (its remaining
        # deliveries then interleave with the new orders' tasks)
        candidates = []
        for cid, sim in runner.couriers.items():
            if cid in batches or sim.free_at > now + BATCH_HOLD_S:
                continue
            if len(sim.courier.on_hand) >= sim.courier.capacity - 1:
                continue
            p = travel.point(sim.courier.current_aoi)
            q = travel.point(order.pickup_aoi)
            dist = haversine_m(p[0], p[1], q[0], q[1])
            if sim.courier.on_hand:
                dist += 400.0  # mild preference for idle couriers
            if predicted_ok(sim, [order], now + BATCH_HOLD_S):
                candidates.append((dist, cid))
        if candidates:
            candidates.sort()
            batches[candidates[0][1]] = _Batch(orders=[order], opened_at=now)
            continue
        # everyone is busy: spawn an overflow courier at the pickup point
        cid = f"x{next_overflow:03d}"
        next_overflow += 1
        runner.couriers[cid] = _SimCourier(
            courier=Courier(id=cid, current_aoi=order.pickup_aoi,
                            capacity=scenario.config.courier_capacity),
            rank=0.2)
        rank[cid] = 0.2
        overflow.append(cid)
        batches[cid] = _Batch(orders=[order], opened_at=now)

    for courier_id in sorted(batches):
        dispatch_batch(courier_id, batches[courier_id].opened_at + BATCH_HOLD_S)
    runner.finish()

    events = [TrajectoryEvent(courier_id=e.courier_id, order_id=e.order_id, fu=e.fu,
                              action=e.kind, timestamp=e.time)
              for e in sorted(runner.events, key=lambda e: (e.courier_id, e.time,
                                                            e.order_id))]
    by_order: dict[str, dict[str, float]] = {}
    for ev in events:
        by_order.setdefault(ev.order_id, {})[ev.action] = ev.timestamp
    order_by_id = {o.id: o for o in scenario.orders}
    history = []
    for oid in sorted(by_order):
        order = order_by_id[oid]
        times = by_order[oid]
        p = scenario.centroids[order.pickup_aoi]
        d = scenario.centroids[order.delivery_aoi]
        history.append(OrderRecord(
            order_id=oid, fu=order.fu, pickup_aoi=order.pickup_aoi,
            delivery_aoi=order.delivery_aoi, scenario=scenario.config.scenario,
            placed_at=order.placed_at, pickup_at=times["pickup"],
            delivered_at=times["delivery"],
            delivery_distance_m=haversine_m(p.lat, p.lon, d.lat, d.lon),
            promised_deadline=order.promised_deadline))
    return TrajectoryData(events=events, history=history, courier_rank=rank,
                          overflow_couriers=overflow)
