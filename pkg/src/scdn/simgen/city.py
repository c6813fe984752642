"""Synthetic grid city with planted pooling corridors.

A corridor is a small set of FUs drawn from one merchant cluster to one
compact residential patch; its orders arrive in shared time bursts, so a
sensible courier serves them together.  Corridors are the ground truth
that the learned affinity is expected to recover.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..dispatch.routing import Order, TravelModel
from ..errors import ValidationError
from ..network import (AoiId, AoiStats, BarrierInfo, FlowUnit, FuId, GeoPoint,
                       SCENARIO_TAGS, make_fu_id)

logger = logging.getLogger(__name__)

METERS_PER_DEG_LAT = 111_320.0


@dataclass
class ScenarioConfig:
    grid_rows: int = 12
    grid_cols: int = 12
    cell_size_m: float = 400.0
    base_lat: float = 31.0
    base_lon: float = 121.0
    merchant_clusters: int = 3
    merchant_cluster_radius_cells: int = 1
    corridors: int = 8
    corridor_size: int = 8
    background_fus: int = 80
    scenario: str = "weekday-peak"
    horizon_s: float = 7200.0
    corridor_burst_rate_per_h: float = 10.0
    burst_orders_min: int = 2
    burst_orders_max: int = 4
    burst_window_s: float = 240.0
    background_rate_per_fu_h: float = 0.5
    courier_count: int = 60
    courier_capacity: int = 5
    sc_share: float = 0.75
    deadline_mean_s: float = 2700.0
    deadline_std_s: float = 300.0
    speed_mps: float = 5.0
    rng_seed: int = 0

    def validate(self) -> None:
        counts = (self.grid_rows, self.grid_cols, self.merchant_clusters,
                  self.corridors, self.corridor_size, self.courier_count,
                  self.courier_capacity, self.burst_orders_min, self.burst_orders_max)
        if any(c < 1 for c in counts):
            raise ValidationError("scenario counts must be at least 1")
        rates = (self.corridor_burst_rate_per_h, self.background_rate_per_fu_h)
        if any(r < 0 for r in rates):
            raise ValidationError("rates must be non-negative")
        if self.scenario not in SCENARIO_TAGS:
            raise ValidationError(f"unknown scenario tag {self.scenario!r}")
        if self.burst_orders_max < self.burst_orders_min:
            raise ValidationError("burst_orders_max below burst_orders_min")
        if not (0.0 <= self.sc_share <= 1.0):
            raise ValidationError("sc_share must lie in [0, 1]")


@dataclass(frozen=True)
class CourierSpec:
    id: str
    start_aoi: AoiId
    capacity: int
    rank: float  # efficiency percentile, lower is better


@dataclass
class GroundTruth:
    corridors: list[list[FuId]]
    corridor_of: dict[FuId, int]
    planted_seh: list[list[FuId]]

    def is_corridor_pair(self, a: FuId, b: FuId) -> bool:
        ca = self.corridor_of.get(a)
        return ca is not None and ca == self.corridor_of.get(b)


@dataclass
class Scenario:
    config: ScenarioConfig
    centroids: dict[AoiId, GeoPoint]
    merchant_aois: list[AoiId]
    fus: list[FlowUnit]
    orders: list[Order]
    couriers: list[CourierSpec]
    ground_truth: GroundTruth
    aoi_stats: AoiStats

    @property
    def travel(self) -> TravelModel:
        return TravelModel(centroids=self.centroids, speed_mps=self.config.speed_mps)

    @property
    def fu_ids(self) -> list[FuId]:
        return [fu.id for fu in self.fus]

    def order_volumes(self) -> dict[FuId, int]:
        volumes: dict[FuId, int] = {fu.id: 0 for fu in self.fus}
        for order in self.orders:
            volumes[order.fu] = volumes.get(order.fu, 0) + 1
        return volumes


def _aoi_id(row: int, col: int) -> AoiId:
    return f"A{row:02d}{col:02d}"


def _grid_centroids(cfg: ScenarioConfig) -> dict[AoiId, GeoPoint]:
    lat_step = cfg.cell_size_m / METERS_PER_DEG_LAT
    lon_step = cfg.cell_size_m / (METERS_PER_DEG_LAT * math.cos(math.radians(cfg.base_lat)))
    out = {}
    for r in range(cfg.grid_rows):
        for c in range(cfg.grid_cols):
            out[_aoi_id(r, c)] = GeoPoint(cfg.base_lat + (r + 0.5) * lat_step,
                                          cfg.base_lon + (c + 0.5) * lon_step)
    return out


def generate_city(config: ScenarioConfig) -> Scenario:
    """Deterministic scenario from the config seed."""
    config.validate()
    rng = np.random.default_rng(config.rng_seed)
    centroids = _grid_centroids(config)
    rows, cols = config.grid_rows, config.grid_cols

    # merchant clusters: well-separated centers plus their neighborhoods
    centers: list[tuple[int, int]] = []
    min_sep = max(2, min(rows, cols) // (config.merchant_clusters + 1))
    attempts = 0
    while len(centers) < config.merchant_clusters and attempts < 10_000:
        attempts += 1
        r = int(rng.integers(1, rows - 1))
        c = int(rng.integers(1, cols - 1))
        if all(abs(r - r0) + abs(c - c0) >= min_sep for r0, c0 in centers):
            centers.append((r, c))
    if len(centers) < config.merchant_clusters:
        raise ValidationError("grid too small for the requested merchant clusters")

    rad = config.merchant_cluster_radius_cells
    cluster_aois: list[list[AoiId]] = []
    merchant_aois: list[AoiId] = []
    for r0, c0 in centers:
        block = [_aoi_id(r, c)
                 for r in range(max(0, r0 - rad), min(rows, r0 + rad + 1))
                 for c in range(max(0, c0 - rad), min(cols, c0 + rad + 1))]
        cluster_aois.append(block)
        merchant_aois.extend(block)

    merchant_set = set(merchant_aois)
    residential = [a for a in centroids if a not in merchant_set]

    # corridors: one merchant cluster to one compact residential patch;
    # corridors of a cluster share its pickup AOIs, so what separates them
    # is who gets picked up together, not the pickup coordinates
    scenario_tag = config.scenario
    used_fus: set[FuId] = set()
    corridors: list[list[FuId]] = []
    fus: list[FlowUnit] = []
    anchors: list[tuple[int, int, int]] = []
    for k in range(config.corridors):
        cluster_idx = k % config.merchant_clusters
        pickups = cluster_aois[cluster_idx]
        for _attempt in range(300):
            anchor = residential[int(rng.integers(0, len(residential)))]
            ar, ac = int(anchor[1:3]), int(anchor[3:5])
            # each corridor delivers into two nearby lobes: couriers pick its
            # orders up together, while the delivery legs split spatially.
            # Pickup co-occurrence is what ties the lobes to one flow.
            lobe_dr, lobe_dc = ((3, 0) if ac >= cols // 2 else (0, 3)) \
                if ar < rows - 4 else (0, -3)
            br, bc = ar + lobe_dr, ac + lobe_dc
            if not (0 <= br < rows and 0 <= bc < cols):
                continue
            if _attempt < 200 and any(
                    min(abs(ar - r0) + abs(ac - c0), abs(br - r0) + abs(bc - c0)) < 4
                    for r0, c0, cl in anchors if cl == cluster_idx):
                continue

            def patch_cells(cr: int, cc: int) -> list[str]:
                return [_aoi_id(r, c)
                        for r in range(max(0, cr - 1), min(rows, cr + 2))
                        for c in range(max(0, cc - 1), min(cols, cc + 2))
                        if _aoi_id(r, c) not in merchant_set]

            members: list[FuId] = []
            half = (config.corridor_size + 1) // 2
            for target, patch in ((half, patch_cells(ar, ac)),
                                  (config.corridor_size - half, patch_cells(br, bc))):
                combos = [(p, d) for p in pickups for d in patch]
                rng.shuffle(combos)
                added = 0
                for p, d in combos:
                    fu = make_fu_id(p, d, scenario_tag)
                    if fu not in used_fus and fu not in members:
                        members.append(fu)
                        added += 1
                        if added == target:
                            break
            if len(members) == config.corridor_size:
                used_fus.update(members)
                corridors.append(members)
                anchors.append((ar, ac, cluster_idx))
                anchors.append((br, bc, cluster_idx))
                fus.extend(FlowUnit.from_id(m) for m in members)
                break
        else:
            raise ValidationError("could not plant a corridor; relax the config")

    # background FUs: arbitrary merchant -> residential pairs
    added = 0
    guard = 0
    while added < config.background_fus and guard < 100_000:
        guard += 1
        p = merchant_aois[int(rng.integers(0, len(merchant_aois)))]
        d = residential[int(rng.integers(0, len(residential)))]
        fu = make_fu_id(p, d, scenario_tag)
        if fu in used_fus:
            continue
        used_fus.add(fu)
        fus.append(FlowUnit.from_id(fu))
        added += 1

    # order stream: corridor bursts plus background arrivals
    orders_raw: list[tuple[float, FuId]] = []
    hours = config.horizon_s / 3600.0
    for members in corridors:
        n_bursts = int(rng.poisson(config.corridor_burst_rate_per_h * hours))
        burst_times = np.sort(rng.uniform(0.0, config.horizon_s, size=n_bursts))
        for t0 in burst_times:
            k = int(rng.integers(config.burst_orders_min, config.burst_orders_max + 1))
            k = min(k, len(members))
            chosen = rng.choice(len(members), size=k, replace=False)
            offsets = rng.uniform(0.0, config.burst_window_s, size=k)
            for idx, dt in zip(chosen, offsets):
                orders_raw.append((float(t0 + dt), members[int(idx)]))
    for fu in fus:
        if fu.id in {m for mm in corridors for m in mm}:
            continue
        n = int(rng.poisson(config.background_rate_per_fu_h * hours))
        for t in rng.uniform(0.0, config.horizon_s, size=n):
            orders_raw.append((float(t), fu.id))
    orders_raw.sort(key=lambda x: (x[0], x[1]))

    orders: list[Order] = []
    fu_by_id = {fu.id: fu for fu in fus}
    for idx, (t, fu_id) in enumerate(orders_raw):
        fu = fu_by_id[fu_id]
        promise = max(1200.0, float(rng.normal(config.deadline_mean_s,
                                               config.deadline_std_s)))
        orders.append(Order(id=f"o{idx:05d}", fu=fu_id, pickup_aoi=fu.pickup_aoi,
                            delivery_aoi=fu.delivery_aoi, placed_at=t,
                            promised_deadline=t + promise))

    # courier fleet biased toward merchant clusters; most are in the SC band
    couriers: list[CourierSpec] = []
    aoi_list = sorted(centroids)
    for k in range(config.courier_count):
        if rng.random() < 0.7:
            start = merchant_aois[int(rng.integers(0, len(merchant_aois)))]
        else:
            start = aoi_list[int(rng.integers(0, len(aoi_list)))]
        if rng.random() < config.sc_share:
            rank = float(rng.uniform(0.051, 0.35))
        else:
            rank = float(rng.uniform(0.36, 1.0)) if rng.random() < 0.8 \
                else float(rng.uniform(0.0, 0.05))
        couriers.append(CourierSpec(id=f"r{k:03d}", start_aoi=start,
                                    capacity=config.courier_capacity, rank=rank))

    # fabricated platform-side stats
    barriers: dict[FuId, BarrierInfo] = {}
    for fu in fus:
        if rng.random() < 0.3:
            n_b = int(rng.integers(1, 3))
            types = tuple(sorted(rng.choice(["bridge", "river", "highway"], size=n_b,
                                            replace=True).tolist()))
            barriers[fu.id] = BarrierInfo(count=n_b, types=types)
    aoi_stats = AoiStats(
        centroids=dict(centroids),
        pickup_pref={a: float(rng.uniform(0, 1)) for a in sorted(merchant_set)},
        delivery_pref={a: float(rng.uniform(0, 1)) for a in aoi_list},
        barriers=barriers,
    )

    corridor_of = {fu: k for k, members in enumerate(corridors) for fu in members}
    ground_truth = GroundTruth(corridors=corridors, corridor_of=corridor_of,
                               planted_seh=[list(m) for m in corridors])
    return Scenario(config=config, centroids=centroids, merchant_aois=merchant_aois,
                    fus=fus, orders=orders, couriers=couriers,
                    ground_truth=ground_truth, aoi_stats=aoi_stats)


# ---------------------------------------------------------------------------
# persistence: a scenario directory of JSON/JSON-Lines files plus manifest

def _config_hash(config: ScenarioConfig) -> str:
    payload = json.dumps(asdict(config), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()


def save_scenario(scenario: Scenario, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "aois.csv").open("w", encoding="utf-8") as fh:
        fh.write("aoi_id,lat,lon\n")
        for aoi in sorted(scenario.centroids):
            p = scenario.centroids[aoi]
            fh.write(f"{aoi},{p.lat!r},{p.lon!r}\n")
    with (out / "orders.jsonl").open("w", encoding="utf-8") as fh:
        for o in scenario.orders:
            fh.write(json.dumps({
                "id": o.id, "fu": o.fu, "pickup_aoi": o.pickup_aoi,
                "delivery_aoi": o.delivery_aoi, "placed_at": o.placed_at,
                "promised_deadline": o.promised_deadline}, sort_keys=True) + "\n")
    with (out / "couriers.jsonl").open("w", encoding="utf-8") as fh:
        for c in scenario.couriers:
            fh.write(json.dumps(asdict(c), sort_keys=True) + "\n")
    extras = {
        "config": asdict(scenario.config),
        "merchant_aois": scenario.merchant_aois,
        "fus": [fu.id for fu in scenario.fus],
        "ground_truth": {
            "corridors": scenario.ground_truth.corridors,
            "planted_seh": scenario.ground_truth.planted_seh,
        },
        "aoi_stats": {
            "pickup_pref": scenario.aoi_stats.pickup_pref,
            "delivery_pref": scenario.aoi_stats.delivery_pref,
            "barriers": {fu: {"count": b.count, "types": list(b.types)}
                         for fu, b in sorted(scenario.aoi_stats.barriers.items())},
        },
    }
    (out / "scenario.json").write_text(json.dumps(extras, sort_keys=True, indent=1),
                                       encoding="utf-8")
    manifest = {"config_hash": _config_hash(scenario.config),
                "seed": scenario.config.rng_seed,
                "n_orders": len(scenario.orders),
                "n_fus": len(scenario.fus)}
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1),
                                       encoding="utf-8")


def load_scenario(in_dir: str | Path) -> Scenario:
    src = Path(in_dir)
    extras = json.loads((src / "scenario.json").read_text(encoding="utf-8"))
    config = ScenarioConfig(**extras["config"])
    centroids: dict[AoiId, GeoPoint] = {}
    for line in (src / "aois.csv").read_text(encoding="utf-8").splitlines()[1:]:
        aoi, lat, lon = line.split(",")
        centroids[aoi] = GeoPoint(float(lat), float(lon))
    orders = []
    for line in (src / "orders.jsonl").read_text(encoding="utf-8").splitlines():
        rec = json.loads(line)
        orders.append(Order(**rec))
    couriers = []
    for line in (src / "couriers.jsonl").read_text(encoding="utf-8").splitlines():
        couriers.append(CourierSpec(**json.loads(line)))
    corridors = extras["ground_truth"]["corridors"]
    corridor_of = {fu: k for k, members in enumerate(corridors) for fu in members}
    stats = extras["aoi_stats"]
    aoi_stats = AoiStats(
        centroids=dict(centroids),
        pickup_pref=stats["pickup_pref"],
        delivery_pref=stats["delivery_pref"],
        barriers={fu: BarrierInfo(count=b["count"], types=tuple(b["types"]))
                  for fu, b in stats["barriers"].items()},
    )
    return Scenario(config=config, centroids=centroids,
                    merchant_aois=extras["merchant_aois"],
                    fus=[FlowUnit.from_id(f) for f in extras["fus"]],
                    orders=orders, couriers=couriers,
                    ground_truth=GroundTruth(corridors=corridors, corridor_of=corridor_of,
                                             planted_seh=extras["ground_truth"]["planted_seh"]),
                    aoi_stats=aoi_stats)
