"""Independent verification oracles.

Each function checks one computation against an independent route:
finite differences for gradients, exhaustive enumeration for solvers,
Monte-Carlo baselines for metrics.  The CLI's ``oracle-check`` command
runs all of them; the test suite calls them individually.
"""

from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dispatch.hotspot_mode import seh_assignment_cost, solve_seh_hillclimb
from .dispatch.moa import (Assignment, AssignmentEntry, ExactCaps, GoalWeights,
                           MoaInstance, combine_orders, md_score, solve_moa_exact,
                           solve_moa_iterative)
from .dispatch.routing import Courier, Order, TravelModel, ensure_route
from .embedding.evaluation import auc_score
from .embedding.model import GraphContext, ModelParams, TrainConfig, flatten_grads
from .embedding.store import EmbeddingTable
from .embedding.training import TrainingPairSets, loss_and_grad
from .indices import HppIndex
from .network import GeoPoint, build_amhen, make_fu_id
from .seh import BPInstance, GAParams, check_feasibility, objective, solve_exact, solve_ga

logger = logging.getLogger(__name__)

SCENARIO = "weekday-peak"


@dataclass
class OracleResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _result(name: str, passed: bool, detail: str, t0: float) -> OracleResult:
    return OracleResult(name=name, passed=passed, detail=detail,
                        seconds=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# gradient check

def numerical_gradient(fn: Callable[[np.ndarray], float], theta: np.ndarray,
                       eps: float = 1e-6) -> np.ndarray:
    """Central finite differences, one coordinate at a time."""
    grad = np.zeros_like(theta)
    for k in range(theta.size):
        up = theta.copy()
        up[k] += eps
        down = theta.copy()
        down[k] -= eps
        grad[k] = (fn(up) - fn(down)) / (2.0 * eps)
    return grad


def _tiny_graph(rng: np.random.Generator, n_nodes: int = 5, attr_dim: int = 6):
    fus = [make_fu_id(f"P{i}", f"D{i}", SCENARIO) for i in range(n_nodes)]
    attrs = {fu: rng.normal(size=attr_dim) for fu in fus}
    seqs = [([fus[0], fus[1], fus[2]], [fus[0], fus[2]]),
            ([fus[1], fus[3], fus[4]], [fus[3], fus[4], fus[1]])]
    return build_amhen(seqs, attrs)


def gradient_check(seed: int = 0, rel_tol: float = 1e-4) -> OracleResult:
    """Analytic gradients vs central differences on a 5-node graph."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    amhen = _tiny_graph(rng)
    cfg = TrainConfig(embedding_dim=8, edge_embedding_dim=4, attention_dim=3,
                      aggregation_depth=2)
    ctx = GraphContext.from_amhen(amhen)
    params = ModelParams.init(rng, ctx.attrs.shape[1], cfg)
    pairs = TrainingPairSets.from_config(
        cfg,
        positives={"pickup": np.array([[0, 1], [1, 2]]),
                   "delivery": np.array([[0, 2], [3, 4]])},
        negatives={"pickup": np.array([[0, 3], [2, 4]]),
                   "delivery": np.array([[1, 4], [0, 4]])})
    _, grads = loss_and_grad(params, ctx, pairs)
    analytic = flatten_grads(grads)

    theta0 = params.flatten()

    def value(theta: np.ndarray) -> float:
        params.unflatten(theta)
        v, _ = loss_and_grad(params, ctx, pairs, want_grad=False)
        return v

    numeric = numerical_gradient(value, theta0)
    params.unflatten(theta0)
    rel = float(np.linalg.norm(analytic - numeric)
                / max(1e-12, np.linalg.norm(analytic + numeric)))
    return _result("gradient-vs-finite-differences", rel <= rel_tol,
                   f"rel err {rel:.2e} over {theta0.size} parameters", t0)


# ---------------------------------------------------------------------------
# hotspot solvers

def random_bp_instance(seed: int, n_fus: int = 8, n_groups: int = 2) -> BPInstance:
    """Clustered affinity instance with a feasible planted partition."""
    rng = np.random.default_rng(seed)
    p = rng.uniform(0.0, 0.25, size=(n_fus, n_fus))
    half = n_fus // 2
    for grp in (range(half), range(half, n_fus)):
        for i in grp:
            for j in grp:
                if i != j:
                    p[i, j] = rng.uniform(0.6, 0.95)
    p = (p + p.T) / 2.0
    np.fill_diagonal(p, 1.0)
    volumes = rng.uniform(20.0, 60.0, size=n_fus)
    return BPInstance(fus=[f"f{i}" for i in range(n_fus)], hpp=p, volumes=volumes,
                      n_groups=n_groups, size_min=2, size_max=n_fus,
                      volume_floor=float(volumes.min() * 2 * 0.9), hpp_floor=0.4)


def ga_vs_exact(n_instances: int = 20, seed: int = 0,
                ratio_floor: float = 0.95) -> OracleResult:
    t0 = time.perf_counter()
    worst = 1.0
    for k in range(n_instances):
        instance = random_bp_instance(seed + k)
        exact = solve_exact(instance)
        ga = solve_ga(instance, GAParams(rng_seed=seed + k))
        if not exact.feasible:
            continue
        if not ga.feasible:
            worst = 0.0
            break
        report = check_feasibility(ga, instance)
        if not report.ok:
            worst = 0.0
            break
        if ga.objective > exact.objective + 1e-9:
            worst = 0.0
            break
        if exact.objective > 0:
            worst = min(worst, ga.objective / exact.objective)
    return _result("ga-vs-exact-partitioning", worst >= ratio_floor,
                   f"worst objective ratio {worst:.4f} over {n_instances} instances", t0)


def exact_vs_shuffled_enumeration(seed: int = 0) -> OracleResult:
    """The exact partitioner against an independent enumeration order."""
    t0 = time.perf_counter()
    instance = random_bp_instance(seed, n_fus=6)
    first = solve_exact(instance)
    rng = np.random.default_rng(seed + 99)
    labelings = list(itertools.product(range(1, instance.n_groups + 1),
                                       repeat=instance.n_fus))
    rng.shuffle(labelings)
    best = None
    for labels in labelings:
        arr = np.array(labels, dtype=np.int64)
        if not check_feasibility(arr, instance).ok:
            continue
        value = objective(arr, instance)
        if best is None or value > best + 1e-12:
            best = value
    match = best is not None and abs(best - first.objective) <= 1e-9 and first.feasible
    return _result("exact-partition-vs-shuffled-enumeration", bool(match),
                   f"objectives {first.objective:.6f} vs {best}", t0)


# ---------------------------------------------------------------------------
# dispatch

def gap_instance(seed: int, weights: GoalWeights | None = None) -> MoaInstance:
    """Peak-regime random instance inside the exact solver's caps."""
    rng = np.random.default_rng(seed)
    centroids: dict[str, GeoPoint] = {}
    for m in range(2):
        lat, lon = 31.0 + 0.012 * m, 121.0 + 0.012 * m
        centroids[f"M{m}"] = GeoPoint(lat, lon)
        for k in range(3):
            centroids[f"D{m}{k}"] = GeoPoint(lat + rng.uniform(-7e-3, 7e-3),
                                             lon + rng.uniform(-7e-3, 7e-3))
    travel = TravelModel(centroids=centroids)
    n_orders = int(rng.integers(4, 7))
    fu_points = {}
    orders = []
    for k in range(n_orders):
        m = int(rng.integers(0, 2))
        pickup, delivery = f"M{m}", f"D{m}{int(rng.integers(0, 3))}"
        fu = make_fu_id(pickup, delivery, SCENARIO)
        fu_points[fu] = (centroids[pickup], centroids[delivery])
        orders.append(Order(id=f"o{k}", fu=fu, pickup_aoi=pickup, delivery_aoi=delivery,
                            placed_at=0.0,
                            promised_deadline=float(rng.uniform(2400, 2900))))
    fu_list = sorted(fu_points)
    vectors = np.array([[ (p.lat - 31.006) * 111_320, (p.lon - 121.006) * 111_320,
                          (d.lat - 31.006) * 111_320, (d.lon - 121.006) * 111_320]
                        for p, d in (fu_points[f] for f in fu_list)])
    table = EmbeddingTable(fus=fu_list, overall=vectors, pickup=vectors,
                           delivery=vectors,
                           provenance=np.zeros(len(fu_list), dtype=np.uint8))
    n_couriers = int(rng.integers(max(2, (n_orders + 1) // 2), 6))
    aois = sorted(centroids)
    couriers = [Courier(id=f"c{k}", capacity=5,
                        current_aoi=aois[int(rng.integers(0, len(aois)))])
                for k in range(n_couriers)]
    return MoaInstance(orders=orders, couriers=couriers, travel=travel,
                       hpp_index=HppIndex(table),
                       weights=weights or GoalWeights())


def moa_gap(n_instances: int = 50, seed: int = 0, gap_tol: float = 0.05,
            ) -> OracleResult:
    t0 = time.perf_counter()
    gaps: dict[str, list[float]] = {"ruled": [], "scdn": []}
    for k in range(n_instances):
        instance = gap_instance(seed + k)
        exact = solve_moa_exact(instance)
        if not exact.entries or exact.total_cost <= 1e-9:
            continue
        for method, use_scdn in (("ruled", False), ("scdn", True)):
            assignment, _ = solve_moa_iterative(instance, use_scdn=use_scdn)
            if assignment.partial:
                gaps[method].append(10.0)  # a stranded order is a hard failure
                continue
            gaps[method].append((assignment.total_cost - exact.total_cost)
                                / exact.total_cost)
    means = {m: float(np.mean(v)) for m, v in gaps.items() if v}
    ok = bool(means) and all(v <= gap_tol for v in means.values())
    return _result("moa-heuristic-vs-exact",
                   ok, f"mean gaps {means} over {len(gaps['ruled'])} instances", t0)


def moa_exact_vs_shuffled(seed: int = 0) -> OracleResult:
    """solve_moa_exact against a permutation-shuffled second enumeration."""
    t0 = time.perf_counter()
    instance = gap_instance(seed)
    instance.orders = instance.orders[:5]
    instance.couriers = instance.couriers[:4]
    first = solve_moa_exact(instance)

    rng = np.random.default_rng(seed + 7)
    couriers = [c.clone() for c in instance.couriers]
    for c in couriers:
        ensure_route(c, instance.travel, instance.now)
    orders = sorted(instance.orders, key=lambda o: o.id)

    def partitions(items):
        if not items:
            yield []
            return
        rest = partitions(items[1:])
        for partial in rest:
            options = []
            for k in range(len(partial)):
                if len(partial[k]) < min(instance.bundle_cap, 3):
                    options.append(partial[:k] + [partial[k] + [items[0]]]
                                   + partial[k + 1:])
            options.append([[items[0]]] + partial)
            rng.shuffle(options)
            yield from options

    best = None
    all_parts = list(partitions(orders))
    rng.shuffle(all_parts)
    for partition in all_parts:
        if len(partition) > len(couriers):
            continue
        perms = list(itertools.permutations(couriers, len(partition)))
        rng.shuffle(perms)
        for chosen in perms:
            total = 0.0
            feasible = True
            for block, courier in zip(partition, chosen):
                cost, _ = md_score(courier, tuple(sorted(block, key=lambda o: o.id)),
                                   instance)
                if not np.isfinite(cost):
                    feasible = False
                    break
                total += cost
            if feasible and (best is None or total < best):
                best = total
    match = best is not None and abs(best - first.total_cost) <= 1e-9
    return _result("moa-exact-vs-shuffled-enumeration", bool(match),
                   f"totals {first.total_cost:.6f} vs {best}", t0)


def hillclimb_vs_bruteforce(n_instances: int = 10, seed: int = 0) -> OracleResult:
    """Hotspot local search against exhaustive assignment enumeration."""
    t0 = time.perf_counter()
    worst_excess = 0.0
    for k in range(n_instances):
        rng = np.random.default_rng(seed + k)
        n_orders = int(rng.integers(4, 7))
        n_couriers = int(rng.integers(2, 4))
        aois = [f"A{i}" for i in range(5)]
        orders = []
        for i in range(n_orders):
            p, d = rng.choice(5, size=2, replace=False)
            orders.append(Order(id=f"o{i}", fu=make_fu_id(aois[p], aois[d], SCENARIO),
                                pickup_aoi=aois[p], delivery_aoi=aois[d],
                                placed_at=0.0, promised_deadline=3000.0))
        couriers = [Courier(id=f"c{i}", current_aoi=aois[int(rng.integers(0, 5))],
                            capacity=4) for i in range(n_couriers)]
        result = solve_seh_hillclimb(orders, couriers, rng_seed=seed + k)

        best = None
        for labels in itertools.product(range(n_couriers), repeat=n_orders):
            load = [0] * n_couriers
            ok = True
            for lab in labels:
                load[lab] += 1
                if load[lab] > couriers[lab].capacity:
                    ok = False
                    break
            if not ok:
                continue
            total = sum(seh_assignment_cost(couriers[c],
                                            [orders[i] for i, lab in enumerate(labels)
                                             if lab == c])
                        for c in range(n_couriers))
            if best is None or total < best:
                best = total
        if best is None:
            continue
        worst_excess = max(worst_excess, result.total_cost - best)
    return _result("hillclimb-vs-bruteforce", worst_excess <= 1e-9,
                   f"worst objective excess {worst_excess:.3g}", t0)


def combine_orders_trace(seed: int = 0) -> OracleResult:
    """Hand-traced bundling loop on the three-order A/B/C configuration."""
    t0 = time.perf_counter()
    fus = [make_fu_id(f"P{i}", f"D{i}", SCENARIO) for i in range(3)]
    vec = {0: [1.0, 0.0], 1: [0.9, 0.4359], 2: [0.8, 0.6]}
    table = EmbeddingTable(fus=sorted(fus),
                           overall=np.array([vec[i] for i, _ in
                                             sorted(enumerate(fus), key=lambda x: x[1])]),
                           pickup=np.zeros((3, 2)), delivery=np.zeros((3, 2)),
                           provenance=np.zeros(3, dtype=np.uint8))
    index = HppIndex(table)
    orders = [Order(id=f"o{i}", fu=fus[i], pickup_aoi=f"P{i}", delivery_aoi=f"D{i}",
                    placed_at=0.0, promised_deadline=1800.0) for i in range(3)]
    p01 = index.value(fus[0], fus[1])
    p02 = index.value(fus[0], fus[2])
    p12 = index.value(fus[1], fus[2])
    bundles, singles = combine_orders(orders, index, p1=0.6)
    # independent trace: prune below 0.6, keep best pair, drop conflicts
    pairs = {(0, 1): p01, (0, 2): p02, (1, 2): p12}
    surviving = {k: v for k, v in pairs.items() if v >= 0.6}
    expect_bundle = max(surviving, key=lambda k: (surviving[k], ))
    got = tuple(sorted(int(o.id[1]) for o in bundles[0])) if bundles else None
    leftover = {int(o.id[1]) for o in singles}
    expect_leftover = set(range(3)) - set(expect_bundle)
    ok = got == expect_bundle and leftover == expect_leftover and len(bundles) == 1
    return _result("order-combination-hand-trace", ok,
                   f"hpp {p01:.2f}/{p02:.2f}/{p12:.2f} bundle {got}", t0)


def md_non_additivity(seed: int = 0) -> OracleResult:
    """Bundle score differs from the sum of singleton scores by construction."""
    t0 = time.perf_counter()
    centroids = {"M": GeoPoint(31.0, 121.0), "D": GeoPoint(31.01, 121.0),
                 "C": GeoPoint(30.995, 121.0)}
    travel = TravelModel(centroids=centroids)
    orders = [Order(id=f"o{i}", fu=make_fu_id("M", "D", SCENARIO), pickup_aoi="M",
                    delivery_aoi="D", placed_at=0.0, promised_deadline=3600.0)
              for i in range(2)]
    instance = MoaInstance(orders=orders, couriers=[], travel=travel, hpp_index=None,
                           weights=GoalWeights(1.0, 0.0, 0.0))
    courier = Courier(id="c", current_aoi="C", capacity=5)
    pair_cost, _ = md_score(courier, tuple(orders), instance)
    single_costs = [md_score(courier.clone(), (o,), instance)[0] for o in orders]
    gap = abs(pair_cost - sum(single_costs))
    return _result("md-score-non-additivity", gap > 1e-6,
                   f"bundle {pair_cost:.4f} vs singles sum {sum(single_costs):.4f}", t0)


def random_scores_auc(seed: int = 0, runs: int = 40) -> OracleResult:
    """Random scores must land near AUC 0.5 (Monte-Carlo)."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    aucs = [auc_score(rng.normal(size=200), rng.normal(size=200)) for _ in range(runs)]
    mean = float(np.mean(aucs))
    return _result("random-score-auc", abs(mean - 0.5) <= 0.05,
                   f"mean AUC {mean:.3f} over {runs} runs", t0)


ALL_ORACLES: tuple[Callable[[], OracleResult], ...] = (
    gradient_check,
    ga_vs_exact,
    exact_vs_shuffled_enumeration,
    moa_gap,
    moa_exact_vs_shuffled,
    hillclimb_vs_bruteforce,
    combine_orders_trace,
    md_non_additivity,
    random_scores_auc,
)


def run_all() -> list[OracleResult]:
    return [oracle() for oracle in ALL_ORACLES]
