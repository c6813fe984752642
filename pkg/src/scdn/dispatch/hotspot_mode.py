"""Hotspot fast mode: dedicated couriers, AOI-increment scoring, hill climbing.

Within a hotspot the order structure is stable enough that matching
degree reduces to counting new distinct pickup/delivery AOI stops, so
assignment quality is searched directly with move/swap local search
instead of route simulation.
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from .moa import Assignment, AssignmentEntry
from .routing import Courier, Order

logger = logging.getLogger(__name__)


def seh_assignment_cost(courier: Courier, orders: Sequence[Order],
                        w_pickup: float = 0.5, w_delivery: float = 0.5) -> float:
    """Distinct-AOI increments of taking a whole order set; independent of
    acceptance order because each AOI is only new once."""
    base_pickups = {oh.order.pickup_aoi for oh in courier.on_hand if not oh.picked_up}
    base_deliveries = {oh.order.delivery_aoi for oh in courier.on_hand}
    pickups = base_pickups | {o.pickup_aoi for o in orders}
    deliveries = base_deliveries | {o.delivery_aoi for o in orders}
    return w_pickup * (len(pickups) - len(base_pickups)) \
        + w_delivery * (len(deliveries) - len(base_deliveries))


def _total_cost(assign: dict[str, list[Order]], couriers: dict[str, Courier],
                w_pickup: float, w_delivery: float) -> float:
    return sum(seh_assignment_cost(couriers[cid], orders, w_pickup, w_delivery)
               for cid, orders in assign.items())


def solve_seh_hillclimb(seh_orders: Sequence[Order], seh_couriers: Sequence[Courier],
                        rng_seed: int, w_pickup: float = 0.5, w_delivery: float = 0.5,
                        move_cap: int = 10_000, restarts: int = 8) -> Assignment:
    """Greedy seed assignment improved by first-improvement move/swap
    local search with a few seeded random restarts; strictly improving
    moves only, so the objective is non-increasing within a run.  Orders
    beyond total capacity stay unassigned."""
    rng = np.random.default_rng(rng_seed)
    couriers = {c.id: c for c in sorted(seh_couriers, key=lambda c: c.id)}
    room = {cid: c.capacity - len(c.on_hand) for cid, c in couriers.items()}

    def greedy_init() -> tuple[dict[str, list[Order]], list[Order]]:
        assign: dict[str, list[Order]] = {cid: [] for cid in couriers}
        overflow: list[Order] = []
        for order in sorted(seh_orders, key=lambda o: o.id):
            best: tuple[float, str] | None = None
            for cid, courier in couriers.items():
                if len(assign[cid]) >= room[cid]:
                    continue
                delta = seh_assignment_cost(courier, assign[cid] + [order],
                                            w_pickup, w_delivery) \
                    - seh_assignment_cost(courier, assign[cid], w_pickup, w_delivery)
                if best is None or (delta, cid) < best:
                    best = (delta, cid)
            if best is None:
                overflow.append(order)
            else:
                assign[best[1]].append(order)
        return assign, overflow

    def random_init() -> tuple[dict[str, list[Order]], list[Order]]:
        assign = {cid: [] for cid in couriers}
        overflow = []
        ids = sorted(couriers)
        for order in sorted(seh_orders, key=lambda o: o.id):
            open_ids = [cid for cid in ids if len(assign[cid]) < room[cid]]
            if not open_ids:
                overflow.append(order)
            else:
                assign[open_ids[int(rng.integers(0, len(open_ids)))]].append(order)
        return assign, overflow

    best_state: tuple[float, dict[str, list[Order]], list[Order]] | None = None
    for attempt in range(max(1, restarts)):
        assign, overflow = greedy_init() if attempt == 0 else random_init()
        assign, total = _climb(assign, couriers, room, rng, w_pickup, w_delivery,
                               move_cap)
        if best_state is None or total < best_state[0] - 1e-12:
            best_state = (total, {cid: list(lst) for cid, lst in assign.items()},
                          overflow)
    total, assign, overflow = best_state

    entries = []
    for cid in sorted(assign):
        orders = assign[cid]
        if not orders:
            continue
        cost = seh_assignment_cost(couriers[cid], orders, w_pickup, w_delivery)
        share = cost / len(orders)
        for order in sorted(orders, key=lambda o: o.id):
            entries.append(AssignmentEntry(order_ids=(order.id,), courier_id=cid,
                                           score=share))
    return Assignment(entries=entries, unassigned=sorted(o.id for o in overflow),
                      total_cost=total, partial=bool(overflow))


def _climb(assign: dict[str, list[Order]], couriers: dict[str, Courier],
           room: dict[str, int], rng: np.random.Generator,
           w_pickup: float, w_delivery: float, move_cap: int,
           ) -> tuple[dict[str, list[Order]], float]:
    def courier_cost(cid: str, orders: list[Order]) -> float:
        return seh_assignment_cost(couriers[cid], orders, w_pickup, w_delivery)

    moves = 0
    improved = True
    while improved and moves < move_cap:
        improved = False
        order_slots = [(cid, k) for cid, lst in assign.items() for k in range(len(lst))]
        rng.shuffle(order_slots)
        for cid, k in order_slots:
            if moves >= move_cap:
                break
            order = assign[cid][k]
            base = courier_cost(cid, assign[cid])
            # relocation
            for cid2 in couriers:
                if cid2 == cid or len(assign[cid2]) >= room[cid2]:
                    continue
                delta = (courier_cost(cid, [o for o in assign[cid] if o is not order])
                         + courier_cost(cid2, assign[cid2] + [order])) \
                    - (base + courier_cost(cid2, assign[cid2]))
                if delta < -1e-12:
                    assign[cid].remove(order)
                    assign[cid2].append(order)
                    moves += 1
                    improved = True
                    break
            if improved:
                break
            # swap
            for cid2, lst2 in assign.items():
                if cid2 == cid:
                    continue
                for order2 in lst2:
                    new1 = [o for o in assign[cid] if o is not order] + [order2]
                    new2 = [o for o in lst2 if o is not order2] + [order]
                    delta = (courier_cost(cid, new1) + courier_cost(cid2, new2)) \
                        - (base + courier_cost(cid2, lst2))
                    if delta < -1e-12:
                        assign[cid] = new1
                        assign[cid2] = new2
                        moves += 1
                        improved = True
                        break
                if improved:
                    break
            if improved:
                break
    total = sum(courier_cost(cid, lst) for cid, lst in assign.items())
    return assign, total
