"""Order-stream execution: couriers work their planned routes over time
while a pluggable policy assigns newly placed orders each cycle."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple

from ..dispatch.routing import (Courier, OnHandOrder, Order, Route, Task, TravelModel,
                                build_route, ensure_route)
from .city import CourierSpec, Scenario

logger = logging.getLogger(__name__)

SERVICE_TIME_S = 60.0


class ExecutedEvent(NamedTuple):
    courier_id: str
    order_id: str
    fu: str
    kind: str        # pickup | delivery
    time: float


@dataclass
class _SimCourier:
    courier: Courier
    rank: float
    pending_tasks: list[Task] = field(default_factory=list)
    task_times: list[float] = field(default_factory=list)
    free_at: float = 0.0

    @property
    def id(self) -> str:
        return self.courier.id


class CycleRunner:
    """Advance couriers through task completions between assignment cycles.

    ``assign`` receives (pending orders, available couriers, now) and
    returns a list of (courier_id, orders, planned Route); the runner
    books the route, emits pickup/delivery events as time passes, and
    keeps courier positions and on-hand sets current.
    """

    def __init__(self, scenario: Scenario, travel: TravelModel | None = None,
                 courier_specs: Iterable[CourierSpec] | None = None,
                 service_time_s: float = SERVICE_TIME_S):
        self.scenario = scenario
        self.travel = travel or scenario.travel
        self.service_time_s = service_time_s
        specs = list(courier_specs) if courier_specs is not None else scenario.couriers
        self.couriers: dict[str, _SimCourier] = {}
        for spec in specs:
            courier = Courier(id=spec.id, current_aoi=spec.start_aoi,
                              capacity=spec.capacity)
            self.couriers[spec.id] = _SimCourier(courier=courier, rank=spec.rank)
        self.events: list[ExecutedEvent] = []
        self.order_by_id: dict[str, Order] = {}

    # -- state advancement ------------------------------------------------

    def _advance_courier(self, sim: _SimCourier, until: float) -> None:
        courier = sim.courier
        while sim.pending_tasks and sim.task_times[0] <= until:
            task = sim.pending_tasks.pop(0)
            t = sim.task_times.pop(0)
            order = self.order_by_id[task.order_id]
            self.events.append(ExecutedEvent(courier.id, task.order_id, order.fu,
                                             task.kind, t))
            courier.current_aoi = task.aoi
            if task.kind == "pickup":
                courier.on_hand = [oh if oh.order.id != task.order_id else
                                   OnHandOrder(order=oh.order, picked_up=True)
                                   for oh in courier.on_hand]
            else:
                courier.on_hand = [oh for oh in courier.on_hand
                                   if oh.order.id != task.order_id]
            sim.free_at = t
        # remaining tasks keep their planned times; the courier's route
        # object is rebuilt at the next assignment touching it
        courier.route = None if not sim.pending_tasks else courier.route

    def advance(self, until: float) -> None:
        for sim in self.couriers.values():
            self._advance_courier(sim, until)

    def finish(self) -> None:
        self.advance(float("inf"))

    # -- booking -----------------------------------------------------------

    def book(self, courier_id: str, orders: list[Order], now: float) -> None:
        """Append orders to a courier and replan the remaining tasks."""
        sim = self.couriers[courier_id]
        self._advance_courier(sim, now)  # bring state current before replanning
        courier = sim.courier
        for order in orders:
            self.order_by_id[order.id] = order
        courier.on_hand = list(courier.on_hand) + \
            [OnHandOrder(order=o, picked_up=False) for o in orders]

        # rebuild the remaining-task plan from the courier's position
        from ..dispatch.routing import _insert_order_tasks

        tasks: list[Task] = []
        for oh in sorted(courier.on_hand, key=lambda o: o.order.id):
            tasks = _insert_order_tasks(tasks, oh.order, oh.picked_up,
                                        courier.current_aoi, self.travel)
        start = max(now, sim.free_at)
        route = build_route(tasks, courier.current_aoi, self.travel, start)
        # spread service time: each task adds a fixed handling delay
        times = [float(t) + self.service_time_s * (k + 1)
                 for k, t in enumerate(route.task_times)]
        sim.pending_tasks = list(route.tasks)
        sim.task_times = times
        courier.route = route

    def courier_view(self, courier_id: str, now: float) -> Courier:
        """A dispatchable snapshot with the standing route re-timed to now."""
        sim = self.couriers[courier_id]
        courier = sim.courier
        start = max(now, sim.free_at)
        route = build_route(sim.pending_tasks, courier.current_aoi, self.travel, start)
        courier.route = route
        return courier

    # -- metrics -----------------------------------------------------------

    def event_metrics(self) -> dict:
        """Pickup/delivery pacing and throughput per courier."""
        by_courier: dict[str, list[ExecutedEvent]] = {}
        for ev in sorted(self.events, key=lambda e: (e.courier_id, e.time)):
            by_courier.setdefault(ev.courier_id, []).append(ev)
        pickup_gaps: list[float] = []
        delivery_gaps: list[float] = []
        orders_per_hour: list[float] = []
        for events in by_courier.values():
            picks = [e.time for e in events if e.kind == "pickup"]
            drops = [e.time for e in events if e.kind == "delivery"]
            pickup_gaps.extend(b - a for a, b in zip(picks, picks[1:]))
            delivery_gaps.extend(b - a for a, b in zip(drops, drops[1:]))
            if drops:
                span_h = max(events[-1].time - events[0].time, 600.0) / 3600.0
                orders_per_hour.append(len(drops) / span_h)
        mean = lambda xs: sum(xs) / len(xs) if xs else 0.0
        return {
            "mean_incremental_pickup_s": mean(pickup_gaps),
            "mean_incremental_delivery_s": mean(delivery_gaps),
            "orders_per_hour": mean(orders_per_hour),
            "n_events": len(self.events),
            "active_couriers": len(by_courier),
        }
