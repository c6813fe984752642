"""Orders, couriers, and cheapest-insertion route planning.

Routes are task sequences over AOI centroids, traveled at constant speed.
Insertion preserves the existing task order and always places an order's
pickup before its delivery; this is the route simulation behind every
matching-degree score.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .. import kernels
from ..errors import ValidationError
from ..network import AoiId, FuId, GeoPoint, OrderId, parse_fu_id

logger = logging.getLogger(__name__)

PICKUP = "pickup"
DELIVERY = "delivery"

DEFAULT_SPEED_MPS = 5.0


class Task(NamedTuple):
    order_id: OrderId
    kind: str
    aoi: AoiId


@dataclass(frozen=True)
class Order:
    id: OrderId
    fu: FuId
    pickup_aoi: AoiId
    delivery_aoi: AoiId
    placed_at: float
    promised_deadline: float

    def __post_init__(self):
        if self.promised_deadline <= self.placed_at:
            raise ValidationError(f"order {self.id}: deadline precedes placement")

    @property
    def scenario(self) -> str:
        return parse_fu_id(self.fu)[2]


@dataclass(frozen=True)
class OnHandOrder:
    order: Order
    picked_up: bool = False


@dataclass
class TravelModel:
    """AOI centroid geometry and courier speed."""

    centroids: dict[AoiId, GeoPoint]
    speed_mps: float = DEFAULT_SPEED_MPS

    def __post_init__(self):
        if self.speed_mps <= 0:
            raise ValidationError("speed must be positive")
        self._points = {aoi: (p.lat, p.lon) for aoi, p in self.centroids.items()}

    def point(self, aoi: AoiId) -> tuple[float, float]:
        try:
            return self._points[aoi]
        except KeyError:
            raise ValidationError(f"no centroid for AOI {aoi!r}") from None

    def distance(self, a: AoiId, b: AoiId) -> float:
        pa, pb = self.point(a), self.point(b)
        return kernels.haversine_m(pa[0], pa[1], pb[0], pb[1])

    def task_arrays(self, tasks: Sequence[Task]) -> tuple[np.ndarray, np.ndarray]:
        lats = np.empty(len(tasks))
        lons = np.empty(len(tasks))
        for k, task in enumerate(tasks):
            lats[k], lons[k] = self.point(task.aoi)
        return lats, lons


@dataclass
class Route:
    """Planned task sequence with arrival times under constant speed."""

    tasks: list[Task]
    start_aoi: AoiId
    distance_m: float
    task_times: np.ndarray
    lats: np.ndarray
    lons: np.ndarray

    @property
    def completion_times(self) -> dict[OrderId, float]:
        return {t.order_id: float(at) for t, at in zip(self.tasks, self.task_times)
                if t.kind == DELIVERY}

    def validate(self, on_hand: Sequence[OnHandOrder] = ()) -> None:
        seen_pickup: set[OrderId] = set()
        seen_delivery: set[OrderId] = set()
        for task in self.tasks:
            if task.kind == PICKUP:
                if task.order_id in seen_pickup or task.order_id in seen_delivery:
                    raise ValidationError(f"duplicate/late pickup for {task.order_id}")
                seen_pickup.add(task.order_id)
            else:
                if task.order_id in seen_delivery:
                    raise ValidationError(f"duplicate delivery for {task.order_id}")
                seen_delivery.add(task.order_id)
        for oh in on_hand:
            if oh.order.id not in seen_delivery:
                raise ValidationError(f"on-hand order {oh.order.id} has no delivery task")
            if oh.picked_up and oh.order.id in seen_pickup:
                raise ValidationError(f"picked-up order {oh.order.id} has a pickup task")
        for oid in seen_delivery:
            if oid in seen_pickup:
                p = next(k for k, t in enumerate(self.tasks)
                         if t.order_id == oid and t.kind == PICKUP)
                d = next(k for k, t in enumerate(self.tasks)
                         if t.order_id == oid and t.kind == DELIVERY)
                if d < p:
                    raise ValidationError(f"delivery precedes pickup for {oid}")


def build_route(tasks: Sequence[Task], start_aoi: AoiId, travel: TravelModel,
                now: float) -> Route:
    lats, lons = travel.task_arrays(tasks)
    s_lat, s_lon = travel.point(start_aoi)
    times = kernels.route_times(lats, lons, s_lat, s_lon, now, travel.speed_mps)
    distance = float((times[-1] - now) * travel.speed_mps) if len(tasks) else 0.0
    return Route(tasks=list(tasks), start_aoi=start_aoi, distance_m=distance,
                 task_times=times, lats=lats, lons=lons)


@dataclass
class Courier:
    id: str
    current_aoi: AoiId
    on_hand: list[OnHandOrder] = field(default_factory=list)
    capacity: int = 5
    region: int | None = None
    route: Route | None = None

    def __post_init__(self):
        if len(self.on_hand) > self.capacity:
            raise ValidationError(f"courier {self.id}: on-hand exceeds capacity")

    def clone(self) -> "Courier":
        return Courier(id=self.id, current_aoi=self.current_aoi,
                       on_hand=list(self.on_hand), capacity=self.capacity,
                       region=self.region, route=self.route)


def initial_route(courier: Courier, travel: TravelModel, now: float) -> Route:
    """The courier's standing route: cheapest insertion of each on-hand
    order (in id order) into an initially empty plan."""
    tasks: list[Task] = []
    for oh in sorted(courier.on_hand, key=lambda o: o.order.id):
        tasks = _insert_order_tasks(tasks, oh.order, oh.picked_up, courier.current_aoi,
                                    travel)
    return build_route(tasks, courier.current_aoi, travel, now)


def ensure_route(courier: Courier, travel: TravelModel, now: float) -> Route:
    if courier.route is None:
        courier.route = initial_route(courier, travel, now)
    return courier.route


def _insert_order_tasks(tasks: list[Task], order: Order, picked_up: bool,
                        start_aoi: AoiId, travel: TravelModel) -> list[Task]:
    lats, lons = travel.task_arrays(tasks)
    s_lat, s_lon = travel.point(start_aoi)
    d_lat, d_lon = travel.point(order.delivery_aoi)
    if picked_up:
        # delivery only: scan single-point slots
        best, best_i = np.inf, 0
        for i in range(len(tasks) + 1):
            prev = (s_lat, s_lon) if i == 0 else (lats[i - 1], lons[i - 1])
            cost = kernels.haversine_m(prev[0], prev[1], d_lat, d_lon)
            if i < len(tasks):
                cost += kernels.haversine_m(d_lat, d_lon, lats[i], lons[i]) \
                    - kernels.haversine_m(prev[0], prev[1], lats[i], lons[i])
            if cost < best:
                best, best_i = cost, i
        out = list(tasks)
        out.insert(best_i, Task(order.id, DELIVERY, order.delivery_aoi))
        return out
    p_lat, p_lon = travel.point(order.pickup_aoi)
    _, i, j = kernels.best_insertion(lats, lons, s_lat, s_lon,
                                     p_lat, p_lon, d_lat, d_lon)
    out = list(tasks)
    out.insert(i, Task(order.id, PICKUP, order.pickup_aoi))
    out.insert(j + 1, Task(order.id, DELIVERY, order.delivery_aoi))
    return out


@dataclass
class InsertionPlan:
    route: Route
    incremental_distance_m: float


def plan_route_insertion(courier: Courier, new_orders: Iterable[Order],
                         travel: TravelModel, now: float = 0.0,
                         ) -> InsertionPlan | None:
    """Cheapest-insertion plan for new orders on top of the current route.

    Orders are inserted one at a time in id order.  Returns None when the
    courier lacks capacity (the rejection signal for recall filters).
    """
    new_orders = sorted(new_orders, key=lambda o: o.id)
    if len(courier.on_hand) + len(new_orders) > courier.capacity:
        return None
    base = ensure_route(courier, travel, now)
    tasks = list(base.tasks)
    for order in new_orders:
        tasks = _insert_order_tasks(tasks, order, False, courier.current_aoi, travel)
    route = build_route(tasks, courier.current_aoi, travel, now)
    return InsertionPlan(route=route,
                         incremental_distance_m=route.distance_m - base.distance_m)


def seh_md(courier: Courier, order: Order, w_pickup: float = 0.5,
           w_delivery: float = 0.5, extra_orders: Iterable[Order] = ()) -> float:
    """Hotspot-mode matching degree: weighted count of new distinct AOI
    stops the order adds to the courier's route; no re-planning involved."""
    pickup_aois = {oh.order.pickup_aoi for oh in courier.on_hand if not oh.picked_up}
    delivery_aois = {oh.order.delivery_aoi for oh in courier.on_hand}
    for extra in extra_orders:
        pickup_aois.add(extra.pickup_aoi)
        delivery_aois.add(extra.delivery_aoi)
    d_pick = 0.0 if order.pickup_aoi in pickup_aois else 1.0
    d_deliv = 0.0 if order.delivery_aoi in delivery_aois else 1.0
    return w_pickup * d_pick + w_delivery * d_deliv
