"""Hot numeric kernels.

Each kernel has a numba ``@njit`` loop implementation and a pure-numpy
fallback; ``accel.NUMBA_ENABLED`` (env ``SCDN_NO_NUMBA``) picks the path.
The public names at the bottom of this module are what the rest of the
package imports.  ``benchmarks/bench_kernels.py`` times the two paths
against each other.
"""

from __future__ import annotations

import math

import numpy as np

from .accel import NUMBA_ENABLED, maybe_njit

EARTH_RADIUS_M = 6_371_000.0


# ---------------------------------------------------------------------------
# haversine

@maybe_njit
def _haversine_scalar(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    rlat1 = math.radians(lat1)
    rlat2 = math.radians(lat2)
    dlat = rlat2 - rlat1
    dlon = math.radians(lon2 - lon1)
    a = math.sin(dlat / 2.0) ** 2 + math.cos(rlat1) * math.cos(rlat2) * math.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in meters between two (lat, lon) points."""
    return _haversine_scalar(float(lat1), float(lon1), float(lat2), float(lon2))


def haversine_many(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Vectorized haversine; broadcasts like numpy arithmetic."""
    rlat1 = np.radians(lat1)
    rlat2 = np.radians(lat2)
    dlat = rlat2 - rlat1
    dlon = np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dlat / 2.0) ** 2 + np.cos(rlat1) * np.cos(rlat2) * np.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(a)))


# ---------------------------------------------------------------------------
# edge-count-weighted random walks over a CSR graph
#
# uniforms are drawn by the caller so both backends produce identical walks
# for the same seed.  Walk rows are padded with -1 once a walk stops.

@maybe_njit
def _walks_numba(indptr, indices, cumprob, starts, length, uniforms):
    n = starts.shape[0]
    out = np.full((n, length), -1, dtype=np.int64)
    for w in range(n):
        cur = starts[w]
        out[w, 0] = cur
        for step in range(1, length):
            lo = indptr[cur]
            hi = indptr[cur + 1]
            if hi == lo:
                break
            u = uniforms[w, step - 1]
            # first slot whose cumulative probability exceeds u
            pos = np.searchsorted(cumprob[lo:hi], u, side="right")
            if pos >= hi - lo:
                pos = hi - lo - 1
            cur = indices[lo + pos]
            out[w, step] = cur
    return out


def _walks_numpy(indptr, indices, cumprob, starts, length, uniforms):
    n = starts.shape[0]
    out = np.full((n, length), -1, dtype=np.int64)
    out[:, 0] = starts
    cur = starts.copy()
    alive = indptr[cur + 1] > indptr[cur]
    for step in range(1, length):
        if not alive.any():
            break
        idx = np.nonzero(alive)[0]
        for w in idx:
            lo = indptr[cur[w]]
            hi = indptr[cur[w] + 1]
            pos = np.searchsorted(cumprob[lo:hi], uniforms[w, step - 1], side="right")
            pos = min(pos, hi - lo - 1)
            cur[w] = indices[lo + pos]
        out[idx, step] = cur[idx]
        alive[idx] = indptr[cur[idx] + 1] > indptr[cur[idx]]
    return out


def weighted_walks(indptr, indices, cumprob, starts, length: int, uniforms) -> np.ndarray:
    """Random walks with transition probability proportional to edge counts.

    ``cumprob`` holds per-row cumulative transition probabilities aligned
    with ``indices``; ``uniforms`` has shape (len(starts), length - 1).
    """
    args = (
        np.asarray(indptr, dtype=np.int64),
        np.asarray(indices, dtype=np.int64),
        np.asarray(cumprob, dtype=np.float64),
        np.asarray(starts, dtype=np.int64),
        int(length),
        np.asarray(uniforms, dtype=np.float64),
    )
    if NUMBA_ENABLED:
        return _walks_numba(*args)
    return _walks_numpy(*args)


# ---------------------------------------------------------------------------
# GA fitness for the hotspot set-partitioning program
#
# Chromosomes are per-FU group labels (0 = unassigned, legal only in
# relaxed mode).  Objective: sum over groups of mean pairwise affinity.
# Violations are penalized linearly at `penalty` per unit.

@maybe_njit
def _ga_fitness_numba(pop, pmat, volumes, n_groups, size_min, size_max,
                      volume_floor, hpp_floor, penalty, allow_unassigned):
    n_pop, n_fu = pop.shape
    fitness = np.empty(n_pop, dtype=np.float64)
    feasible = np.zeros(n_pop, dtype=np.bool_)
    for p in range(n_pop):
        obj = 0.0
        viol = 0.0
        if not allow_unassigned:
            for f in range(n_fu):
                if pop[p, f] == 0:
                    viol += 1.0
        for g in range(1, n_groups + 1):
            size = 0
            vol = 0.0
            pair_sum = 0.0
            for f in range(n_fu):
                if pop[p, f] != g:
                    continue
                size += 1
                vol += volumes[f]
                for f2 in range(f + 1, n_fu):
                    if pop[p, f2] == g:
                        pair_sum += pmat[f, f2]
            if size >= 2:
                npairs = size * (size - 1) / 2.0
                mean_hpp = pair_sum / npairs
                obj += mean_hpp
                if mean_hpp < hpp_floor:
                    viol += hpp_floor - mean_hpp
            if size == 0 and allow_unassigned:
                continue  # relaxed mode: unformed groups carry no bounds
            if size < size_min:
                viol += size_min - size
            elif size > size_max:
                viol += size - size_max
            if vol < volume_floor:
                viol += (volume_floor - vol) / max(volume_floor, 1.0)
        fitness[p] = obj - penalty * viol
        feasible[p] = viol == 0.0
    return fitness, feasible


def _ga_fitness_numpy(pop, pmat, volumes, n_groups, size_min, size_max,
                      volume_floor, hpp_floor, penalty, allow_unassigned):
    n_pop, n_fu = pop.shape
    pmat0 = pmat.copy()
    np.fill_diagonal(pmat0, 0.0)
    obj = np.zeros(n_pop)
    viol = np.zeros(n_pop)
    if not allow_unassigned:
        viol += (pop == 0).sum(axis=1).astype(float)
    for g in range(1, n_groups + 1):
        mask = (pop == g).astype(np.float64)
        size = mask.sum(axis=1)
        vol = mask @ volumes
        pair_sum = np.einsum("pi,ij,pj->p", mask, pmat0, mask) / 2.0
        npairs = size * (size - 1) / 2.0
        with np.errstate(invalid="ignore", divide="ignore"):
            mean_hpp = np.where(npairs > 0, pair_sum / np.maximum(npairs, 1.0), 0.0)
        obj += np.where(size >= 2, mean_hpp, 0.0)
        viol += np.where(size >= 2, np.maximum(0.0, hpp_floor - mean_hpp), 0.0)
        bound_viol = np.maximum(0.0, size_min - size) + np.maximum(0.0, size - size_max)
        bound_viol += np.maximum(0.0, volume_floor - vol) / max(volume_floor, 1.0)
        if allow_unassigned:
            bound_viol = np.where(size == 0, 0.0, bound_viol)
        viol += bound_viol
    fitness = obj - penalty * viol
    return fitness, viol == 0.0


def ga_fitness(pop, pmat, volumes, n_groups: int, size_min: int, size_max: int,
               volume_floor: float, hpp_floor: float, penalty: float,
               allow_unassigned: bool):
    """Fitness and feasibility flags for a population of label vectors."""
    args = (
        np.ascontiguousarray(pop, dtype=np.int64),
        np.ascontiguousarray(pmat, dtype=np.float64),
        np.ascontiguousarray(volumes, dtype=np.float64),
        int(n_groups),
        int(size_min),
        int(size_max),
        float(volume_floor),
        float(hpp_floor),
        float(penalty),
        bool(allow_unassigned),
    )
    if NUMBA_ENABLED:
        return _ga_fitness_numba(*args)
    return _ga_fitness_numpy(*args)


# ---------------------------------------------------------------------------
# cheapest insertion of a pickup/delivery pair into a task sequence
#
# Slots are counted against the existing sequence: inserting at slot i
# places the new point before task i (slot n appends).  The delivery slot
# j >= i keeps pickup-before-delivery; j == i puts it right after the
# pickup.  Returns (added distance, pickup slot, delivery slot) with the
# smallest (distance, i, j) winning.

@maybe_njit
def _best_insertion_numba(lats, lons, start_lat, start_lon,
                          p_lat, p_lon, d_lat, d_lon):
    n = lats.shape[0]
    best = np.inf
    best_i = 0
    best_j = 0
    for i in range(n + 1):
        if i == 0:
            prev_i_lat, prev_i_lon = start_lat, start_lon
        else:
            prev_i_lat, prev_i_lon = lats[i - 1], lons[i - 1]
        if i < n:
            leg_i = _haversine_scalar(prev_i_lat, prev_i_lon, lats[i], lons[i])
        else:
            leg_i = 0.0
        d_prev_p = _haversine_scalar(prev_i_lat, prev_i_lon, p_lat, p_lon)
        for j in range(i, n + 1):
            if j == i:
                cost = d_prev_p + _haversine_scalar(p_lat, p_lon, d_lat, d_lon)
                if i < n:
                    cost += _haversine_scalar(d_lat, d_lon, lats[i], lons[i]) - leg_i
            else:
                cost_p = d_prev_p
                if i < n:
                    cost_p += _haversine_scalar(p_lat, p_lon, lats[i], lons[i]) - leg_i
                prev_j_lat, prev_j_lon = lats[j - 1], lons[j - 1]
                cost_d = _haversine_scalar(prev_j_lat, prev_j_lon, d_lat, d_lon)
                if j < n:
                    cost_d += (_haversine_scalar(d_lat, d_lon, lats[j], lons[j])
                               - _haversine_scalar(prev_j_lat, prev_j_lon, lats[j], lons[j]))
                cost = cost_p + cost_d
            if cost < best:
                best = cost
                best_i = i
                best_j = j
    return best, best_i, best_j


def _best_insertion_numpy(lats, lons, start_lat, start_lon,
                          p_lat, p_lon, d_lat, d_lon):
    n = lats.shape[0]
    prev_lat = np.concatenate(([start_lat], lats))
    prev_lon = np.concatenate(([start_lon], lons))
    legs = np.zeros(n + 1)
    if n:
        legs[:n] = haversine_many(prev_lat[:n], prev_lon[:n], lats, lons)
    d_prev_p = haversine_many(prev_lat, prev_lon, p_lat, p_lon)
    d_prev_d = haversine_many(prev_lat, prev_lon, d_lat, d_lon)
    d_p_next = np.zeros(n + 1)
    d_d_next = np.zeros(n + 1)
    if n:
        d_p_next[:n] = haversine_many(p_lat, p_lon, lats, lons)
        d_d_next[:n] = haversine_many(d_lat, d_lon, lats, lons)
    ins_p = d_prev_p + d_p_next - legs
    ins_d = d_prev_d + d_d_next - legs
    p_to_d = haversine_many(p_lat, p_lon, d_lat, d_lon)
    together = d_prev_p + p_to_d + d_d_next - legs

    cost = ins_p[:, None] + ins_d[None, :]
    ii, jj = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    cost[ii == jj] = together
    cost[jj < ii] = np.inf
    # row-major argmin keeps the smallest (i, j) among exact ties
    flat = int(np.argmin(cost))
    best_i, best_j = np.unravel_index(flat, cost.shape)
    return float(cost[best_i, best_j]), int(best_i), int(best_j)


def best_insertion(lats, lons, start_lat: float, start_lon: float,
                   p_lat: float, p_lon: float, d_lat: float, d_lon: float):
    """Cheapest pickup/delivery insertion slots for one order."""
    args = (
        np.ascontiguousarray(lats, dtype=np.float64),
        np.ascontiguousarray(lons, dtype=np.float64),
        float(start_lat), float(start_lon),
        float(p_lat), float(p_lon), float(d_lat), float(d_lon),
    )
    if NUMBA_ENABLED:
        cost, i, j = _best_insertion_numba(*args)
        return float(cost), int(i), int(j)
    return _best_insertion_numpy(*args)


# ---------------------------------------------------------------------------
# route timing: leg-by-leg travel at constant speed

@maybe_njit
def _route_times_numba(lats, lons, start_lat, start_lon, start_time, speed):
    n = lats.shape[0]
    times = np.empty(n, dtype=np.float64)
    t = start_time
    cur_lat, cur_lon = start_lat, start_lon
    for k in range(n):
        t += _haversine_scalar(cur_lat, cur_lon, lats[k], lons[k]) / speed
        times[k] = t
        cur_lat, cur_lon = lats[k], lons[k]
    return times


def _route_times_numpy(lats, lons, start_lat, start_lon, start_time, speed):
    n = lats.shape[0]
    if n == 0:
        return np.empty(0)
    from_lat = np.concatenate(([start_lat], lats[:-1]))
    from_lon = np.concatenate(([start_lon], lons[:-1]))
    legs = haversine_many(from_lat, from_lon, lats, lons)
    return start_time + np.cumsum(legs / speed)


def route_times(lats, lons, start_lat: float, start_lon: float,
                start_time: float, speed: float) -> np.ndarray:
    """Arrival time at each task of a route driven at constant speed."""
    args = (
        np.ascontiguousarray(lats, dtype=np.float64),
        np.ascontiguousarray(lons, dtype=np.float64),
        float(start_lat), float(start_lon), float(start_time), float(speed),
    )
    if NUMBA_ENABLED:
        return _route_times_numba(*args)
    return _route_times_numpy(*args)


def warmup() -> None:
    """Trigger JIT compilation of every kernel (no-op without numba)."""
    lats = np.array([0.01, 0.02])
    lons = np.array([0.01, 0.02])
    haversine_m(0.0, 0.0, 0.01, 0.01)
    best_insertion(lats, lons, 0.0, 0.0, 0.005, 0.005, 0.015, 0.015)
    route_times(lats, lons, 0.0, 0.0, 0.0, 5.0)
    indptr = np.array([0, 1, 2], dtype=np.int64)
    indices = np.array([1, 0], dtype=np.int64)
    cumprob = np.array([1.0, 1.0])
    weighted_walks(indptr, indices, cumprob, np.array([0]), 3, np.full((1, 2), 0.5))
    pop = np.array([[1, 1, 2, 2]], dtype=np.int64)
    pmat = np.eye(4)
    ga_fitness(pop, pmat, np.ones(4), 2, 1, 4, 0.0, 0.0, 10.0, False)
