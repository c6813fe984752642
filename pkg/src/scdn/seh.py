"""Hotspot identification: partition high-FEI FUs into groups maximizing
mean pairwise HPP under size, volume, and affinity constraints.

Solved with a genetic algorithm over per-FU group labels; an exhaustive
solver provides the exact optimum on small instances for validation.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .errors import ValidationError
from .indices import FeiTable, HppIndex
from .network import FuId

logger = logging.getLogger(__name__)

EXACT_GUARD = 10
UNASSIGNED = 0


@dataclass
class BPInstance:
    """One hotspot-identification problem over candidate FUs."""

    fus: list[FuId]
    hpp: np.ndarray          # F x F symmetric
    volumes: np.ndarray      # orders per interval
    n_groups: int
    size_min: int = 2
    size_max: int = 12
    volume_floor: float = 50.0
    hpp_floor: float = 0.5
    allow_unassigned: bool = False

    def __post_init__(self):
        self.hpp = np.asarray(self.hpp, dtype=np.float64)
        self.volumes = np.asarray(self.volumes, dtype=np.float64)
        f = len(self.fus)
        if self.hpp.shape != (f, f):
            raise ValidationError("hpp matrix shape mismatch")
        if not np.allclose(self.hpp, self.hpp.T, atol=1e-9):
            raise ValidationError("hpp matrix must be symmetric")
        if (self.volumes < 0).any():
            raise ValidationError("volumes must be non-negative")
        if self.size_min > self.size_max:
            raise ValidationError("size_min exceeds size_max")
        if self.n_groups < 1:
            raise ValidationError("n_groups must be positive")

    @property
    def n_fus(self) -> int:
        return len(self.fus)


def default_group_count(volumes: Iterable[float], volume_floor: float) -> int:
    total = sum(volumes)
    return max(1, math.ceil(total / (2.0 * max(volume_floor, 1.0))))


def build_instance(fei_table: FeiTable, hpp_index: HppIndex,
                   volumes: Mapping[FuId, float], fei_threshold: float,
                   n_groups: int | None = None, **kwargs) -> BPInstance:
    """Pre-filter to high-FEI FUs covered by the index and assemble the matrix."""
    candidates = sorted(fu for fu, eta in fei_table.normalized.items()
                        if eta > fei_threshold and fu in hpp_index.table)
    if not candidates:
        raise ValidationError("no FU clears the FEI threshold")
    vols = np.array([float(volumes.get(fu, 0.0)) for fu in candidates])
    floor = kwargs.get("volume_floor", 50.0)
    if n_groups is None:
        n_groups = default_group_count(vols, floor)
    return BPInstance(fus=candidates, hpp=hpp_index.matrix(candidates),
                      volumes=vols, n_groups=n_groups, **kwargs)


@dataclass
class FeasibilityReport:
    ok: bool
    violations: list[str]


@dataclass
class SehPartition:
    groups: list[list[FuId]]
    unassigned: list[FuId]
    objective: float
    feasible: bool
    report: FeasibilityReport | None = None
    seed: int | None = None
    trace: list[float] = field(default_factory=list)

    def labels(self, instance: BPInstance) -> np.ndarray:
        lab = np.zeros(instance.n_fus, dtype=np.int64)
        pos = {fu: i for i, fu in enumerate(instance.fus)}
        for g, members in enumerate(self.groups, start=1):
            for fu in members:
                lab[pos[fu]] = g
        return lab


def labels_to_partition(labels: np.ndarray, instance: BPInstance,
                        objective_value: float | None = None) -> SehPartition:
    groups = [[] for _ in range(instance.n_groups)]
    unassigned = []
    for fu, lab in zip(instance.fus, labels):
        if lab == UNASSIGNED:
            unassigned.append(fu)
        else:
            groups[int(lab) - 1].append(fu)
    if objective_value is None:
        objective_value = objective(labels, instance)
    report = check_feasibility(labels, instance)
    return SehPartition(groups=groups, unassigned=unassigned,
                        objective=objective_value, feasible=report.ok, report=report)


def objective(partition: "SehPartition | np.ndarray", instance: BPInstance) -> float:
    """Sum over groups of the mean pairwise HPP; singletons contribute 0."""
    labels = partition.labels(instance) if isinstance(partition, SehPartition) else \
        np.asarray(partition, dtype=np.int64)
    total = 0.0
    for g in range(1, instance.n_groups + 1):
        rows = np.nonzero(labels == g)[0]
        if len(rows) < 2:
            continue
        sub = instance.hpp[np.ix_(rows, rows)]
        n = len(rows)
        total += (sub.sum() - np.trace(sub)) / (n * (n - 1))
    return float(total)


def check_feasibility(partition: "SehPartition | np.ndarray",
                      instance: BPInstance) -> FeasibilityReport:
    """Constraint check: exclusive assignment, group sizes, group volume,
    and minimum mean affinity per group."""
    if isinstance(partition, SehPartition):
        violations: list[str] = []
        seen: dict[FuId, int] = {}
        for g, members in enumerate(partition.groups, start=1):
            for fu in members:
                if fu in seen:
                    violations.append(f"exclusive-assignment: {fu} in groups "
                                      f"{seen[fu]} and {g}")
                seen[fu] = g
        for fu in partition.unassigned:
            if fu in seen:
                violations.append(f"exclusive-assignment: {fu} both grouped and unassigned")
        known = set(instance.fus)
        for fu in list(seen) + list(partition.unassigned):
            if fu not in known:
                violations.append(f"unknown-fu: {fu}")
        if violations:
            return FeasibilityReport(ok=False, violations=violations)
        labels = partition.labels(instance)
    else:
        labels = np.asarray(partition, dtype=np.int64)
        violations = []

    if not instance.allow_unassigned and (labels == UNASSIGNED).any():
        count = int((labels == UNASSIGNED).sum())
        violations.append(f"exclusive-assignment: {count} FUs left unassigned")
    for g in range(1, instance.n_groups + 1):
        rows = np.nonzero(labels == g)[0]
        size = len(rows)
        if size == 0 and instance.allow_unassigned:
            continue  # relaxed mode: unformed groups carry no bounds
        if size < instance.size_min or size > instance.size_max:
            violations.append(f"group-size: group {g} has {size} FUs, "
                              f"bounds [{instance.size_min}, {instance.size_max}]")
        vol = float(instance.volumes[rows].sum())
        if vol < instance.volume_floor:
            violations.append(f"group-volume: group {g} holds {vol:.1f} orders "
                              f"< floor {instance.volume_floor:.1f}")
        if size >= 2:
            sub = instance.hpp[np.ix_(rows, rows)]
            mean_hpp = (sub.sum() - np.trace(sub)) / (size * (size - 1))
            if mean_hpp < instance.hpp_floor:
                violations.append(f"group-affinity: group {g} mean HPP {mean_hpp:.4f} "
                                  f"< floor {instance.hpp_floor:.4f}")
    return FeasibilityReport(ok=not violations, violations=violations)


@dataclass
class GAParams:
    population: int = 100
    generations: int = 500
    crossover_rate: float = 0.9
    mutation_rate: float | None = None   # default 1 / n_fus
    elitism: int = 2
    tournament: int = 3
    stagnation_limit: int = 150
    rng_seed: int = 0


def _penalty_scale(instance: BPInstance) -> float:
    return 10.0 * instance.n_groups


def solve_ga(instance: BPInstance, params: GAParams | None = None) -> SehPartition:
    """Genetic algorithm over label chromosomes.

    Fitness is the objective minus a penalty per violated constraint unit;
    the best feasible individual ever seen wins, otherwise the best
    penalized one is returned flagged infeasible.
    """
    params = params or GAParams()
    rng = np.random.default_rng(params.rng_seed)
    n = instance.n_fus
    low = UNASSIGNED if instance.allow_unassigned else 1
    labels_high = instance.n_groups + 1
    mutation = params.mutation_rate if params.mutation_rate is not None else 1.0 / n
    penalty = _penalty_scale(instance)

    pop = rng.integers(low, labels_high, size=(params.population, n), dtype=np.int64)
    best_feasible: tuple[float, np.ndarray] | None = None
    best_any: tuple[float, np.ndarray] | None = None
    trace: list[float] = []
    stale = 0

    for _generation in range(params.generations):
        fitness, feasible = kernels.ga_fitness(
            pop, instance.hpp, instance.volumes, instance.n_groups,
            instance.size_min, instance.size_max, instance.volume_floor,
            instance.hpp_floor, penalty, instance.allow_unassigned)
        order = np.argsort(-fitness, kind="stable")
        top = order[0]
        improved = False
        if best_any is None or fitness[top] > best_any[0]:
            best_any = (float(fitness[top]), pop[top].copy())
            improved = True
        for idx in order:
            if feasible[idx]:
                if best_feasible is None or fitness[idx] > best_feasible[0]:
                    best_feasible = (float(fitness[idx]), pop[idx].copy())
                    improved = True
                break
        trace.append(float(fitness[top]))
        stale = 0 if improved else stale + 1
        if stale >= params.stagnation_limit:
            break

        elite = pop[order[:params.elitism]].copy()
        # tournament selection
        contenders = rng.integers(0, params.population,
                                  size=(params.population, params.tournament))
        winners = contenders[np.arange(params.population),
                             np.argmax(fitness[contenders], axis=1)]
        parents = pop[winners]
        # one-point crossover on consecutive parent pairs
        children = parents.copy()
        for k in range(0, params.population - 1, 2):
            if rng.random() < params.crossover_rate and n > 1:
                cut = int(rng.integers(1, n))
                children[k, cut:], children[k + 1, cut:] = \
                    parents[k + 1, cut:].copy(), parents[k, cut:].copy()
        # per-gene mutation
        flip = rng.random(children.shape) < mutation
        if flip.any():
            children[flip] = rng.integers(low, labels_high, size=int(flip.sum()))
        children[:params.elitism] = elite
        pop = children

    chosen = best_feasible if best_feasible is not None else best_any
    labels = chosen[1]
    result = labels_to_partition(labels, instance, objective_value=objective(labels, instance))
    result.seed = params.rng_seed
    result.trace = trace
    return result


def solve_exact(instance: BPInstance) -> SehPartition:
    """Exhaustive enumeration of label vectors (guarded to small instances).

    Ties on the objective break toward the lexicographically smallest
    label vector, which also canonicalizes group-label permutations.
    """
    n = instance.n_fus
    if n > EXACT_GUARD:
        raise ValidationError(f"exact solver limited to {EXACT_GUARD} FUs, got {n}")
    low = UNASSIGNED if instance.allow_unassigned else 1
    labels_range = range(low, instance.n_groups + 1)
    best: tuple[float, tuple[int, ...]] | None = None
    chunk: list[Sequence[int]] = []

    def flush(chunk_labels: list[Sequence[int]]):
        nonlocal best
        if not chunk_labels:
            return
        arr = np.array(chunk_labels, dtype=np.int64)
        fitness, feasible = kernels.ga_fitness(
            arr, instance.hpp, instance.volumes, instance.n_groups,
            instance.size_min, instance.size_max, instance.volume_floor,
            instance.hpp_floor, _penalty_scale(instance), instance.allow_unassigned)
        for row in np.nonzero(feasible)[0]:
            value = float(fitness[row])
            key = tuple(int(x) for x in arr[row])
            if best is None or value > best[0] + 1e-12:
                best = (value, key)
        # itertools.product yields lexicographic order, so the first max wins

    for labels in itertools.product(labels_range, repeat=n):
        chunk.append(labels)
        if len(chunk) >= 4096:
            flush(chunk)
            chunk = []
    flush(chunk)

    if best is None:
        empty = np.full(n, UNASSIGNED if instance.allow_unassigned else 1, dtype=np.int64)
        part = labels_to_partition(empty, instance)
        part.feasible = False
        return part
    return labels_to_partition(np.array(best[1], dtype=np.int64), instance,
                               objective_value=best[0])
