"""Pooling indices derived from the embedding table.

HPP: cosine similarity of two FUs' overall embeddings, the pooling
affinity used everywhere downstream.  FEI: volume-weighted mean HPP over
geographic neighbors, min-max normalized per city.  A hotspot candidate
set is valid when members clear the FEI threshold, every pair clears the
HPP threshold, and the pooled order volume meets the floor.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .embedding.store import EmbeddingTable
from .kernels import haversine_m
from .network import FlowUnit, FuId, GeoPoint

logger = logging.getLogger(__name__)

DEFAULT_HPP_THRESHOLD = 0.5     # Thre_p
DEFAULT_FEI_THRESHOLD = 0.6     # Thre_eta
DEFAULT_NEIGHBOR_RADIUS_M = 1000.0
DEFAULT_VOLUME_FLOOR = 50.0     # orders per identification interval


def hpp(i: FuId, j: FuId, table: EmbeddingTable) -> float | None:
    """Pooling affinity of two FUs; None when either embedding is absent."""
    vi = table.vector(i)
    vj = table.vector(j)
    if vi is None or vj is None:
        return None
    ni = np.linalg.norm(vi)
    nj = np.linalg.norm(vj)
    if ni == 0.0 or nj == 0.0:
        logger.warning("hpp: zero-norm embedding for %s or %s", i, j)
        return 0.0
    return float(np.clip(vi @ vj / (ni * nj), -1.0, 1.0))


class HppIndex:
    """Symmetric on-demand HPP lookup backed by an embedding table."""

    def __init__(self, table: EmbeddingTable):
        self.table = table
        norms = np.linalg.norm(table.overall, axis=1)
        safe = np.where(norms > 0, norms, 1.0)
        self._unit = table.overall / safe[:, None]
        self._zero = norms == 0.0

    def value(self, i: FuId, j: FuId) -> float | None:
        ri = self.table.index.get(i)
        rj = self.table.index.get(j)
        if ri is None or rj is None:
            return None
        if self._zero[ri] or self._zero[rj]:
            return 0.0
        return float(np.clip(self._unit[ri] @ self._unit[rj], -1.0, 1.0))

    def value_or_zero(self, i: FuId, j: FuId) -> float:
        v = self.value(i, j)
        return 0.0 if v is None else v

    def matrix(self, fus: Sequence[FuId]) -> np.ndarray:
        """Dense HPP matrix over covered FUs (raises on absent ones)."""
        rows = [self.table.index[f] for f in fus]
        unit = self._unit[rows]
        m = np.clip(unit @ unit.T, -1.0, 1.0)
        np.fill_diagonal(m, 1.0)
        return m


def geographic_neighborhoods(fus: Iterable[FlowUnit],
                             centroids: Mapping[str, GeoPoint],
                             radius_m: float = DEFAULT_NEIGHBOR_RADIUS_M,
                             ) -> dict[FuId, list[FuId]]:
    """FEI neighborhoods: FUs sharing, or within the radius of, either the
    pickup or the delivery AOI (per scenario)."""
    units = sorted(fus, key=lambda f: f.id)
    by_scenario: dict[str, list[FlowUnit]] = {}
    for fu in units:
        by_scenario.setdefault(fu.scenario, []).append(fu)
    out: dict[FuId, list[FuId]] = {fu.id: [] for fu in units}
    for members in by_scenario.values():
        for a_idx, a in enumerate(members):
            for b in members[a_idx + 1:]:
                if _fei_neighbors(a, b, centroids, radius_m):
                    out[a.id].append(b.id)
                    out[b.id].append(a.id)
    return out


def _fei_neighbors(a: FlowUnit, b: FlowUnit, centroids, radius_m: float) -> bool:
    for aoi_a, aoi_b in ((a.pickup_aoi, b.pickup_aoi), (a.delivery_aoi, b.delivery_aoi)):
        if aoi_a == aoi_b:
            return True
        pa, pb = centroids.get(aoi_a), centroids.get(aoi_b)
        if pa is not None and pb is not None and \
                haversine_m(pa.lat, pa.lon, pb.lat, pb.lon) <= radius_m:
            return True
    return False


@dataclass
class FeiTable:
    raw: dict[FuId, float]
    normalized: dict[FuId, float]
    neighborhoods: dict[FuId, list[FuId]] = field(default_factory=dict)

    def export_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["fu", "raw", "normalized"])
            for fu in sorted(self.raw):
                writer.writerow([fu, f"{self.raw[fu]:.6f}", f"{self.normalized[fu]:.6f}"])


def fei(i: FuId, table: EmbeddingTable, neighborhood: Sequence[FuId],
        volumes: Mapping[FuId, float]) -> float:
    """Raw efficiency indicator for one FU: volume-weighted mean HPP over
    its neighborhood; absent-embedding pairs contribute 0."""
    if not neighborhood:
        return 0.0
    vols = np.array([max(0.0, float(volumes.get(j, 0.0))) for j in neighborhood])
    weights = vols / vols.sum() if vols.sum() > 0 else np.full(len(neighborhood),
                                                              1.0 / len(neighborhood))
    index = HppIndex(table)
    return float(sum(w * index.value_or_zero(i, j) for w, j in zip(weights, neighborhood)))


def build_fei_table(table: EmbeddingTable,
                    neighborhoods: Mapping[FuId, Sequence[FuId]],
                    volumes: Mapping[FuId, float]) -> FeiTable:
    """City-wide FEI with min-max normalization to [0, 1]."""
    index = HppIndex(table)
    raw: dict[FuId, float] = {}
    for fu, nbrs in neighborhoods.items():
        if not nbrs:
            raw[fu] = 0.0
            continue
        vols = np.array([max(0.0, float(volumes.get(j, 0.0))) for j in nbrs])
        weights = vols / vols.sum() if vols.sum() > 0 else np.full(len(nbrs), 1.0 / len(nbrs))
        raw[fu] = float(sum(w * index.value_or_zero(fu, j) for w, j in zip(weights, nbrs)))
    values = np.array(list(raw.values())) if raw else np.zeros(0)
    lo = values.min() if values.size else 0.0
    hi = values.max() if values.size else 0.0
    if hi > lo:
        normalized = {fu: (v - lo) / (hi - lo) for fu, v in raw.items()}
    else:
        normalized = {fu: 0.0 for fu in raw}
    return FeiTable(raw=raw, normalized=normalized,
                    neighborhoods={fu: list(nbrs) for fu, nbrs in neighborhoods.items()})


@dataclass
class SehValidation:
    ok: bool
    violations: list[str]


def seh_validate(candidate: Iterable[FuId], fei_table: FeiTable, hpp_index: HppIndex,
                 volumes: Mapping[FuId, float],
                 fei_threshold: float = DEFAULT_FEI_THRESHOLD,
                 hpp_threshold: float = DEFAULT_HPP_THRESHOLD,
                 volume_floor: float = DEFAULT_VOLUME_FLOOR) -> SehValidation:
    """Check a candidate FU set against the hotspot membership rules."""
    members = sorted(set(candidate))
    violations: list[str] = []
    for fu in members:
        eta = fei_table.normalized.get(fu)
        if eta is None or eta <= fei_threshold:
            violations.append(f"fei-threshold: {fu} eta={eta}")
    for a_idx, a in enumerate(members):
        for b in members[a_idx + 1:]:
            p = hpp_index.value(a, b)
            if p is None:
                violations.append(f"uncovered-pair: ({a}, {b})")
            elif p <= hpp_threshold:
                violations.append(f"pair-threshold: ({a}, {b}) hpp={p:.4f}")
    total = sum(float(volumes.get(fu, 0.0)) for fu in members)
    if total < volume_floor:
        violations.append(f"volume-floor: total={total:.1f} < {volume_floor:.1f}")
    return SehValidation(ok=not violations, violations=violations)


def export_hpp_csv(index: HppIndex, fus: Sequence[FuId], path: str | Path,
                   floor: float = 0.0) -> int:
    """Materialize pairs with HPP above the floor; returns the row count."""
    written = 0
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fu_a", "fu_b", "hpp"])
        ordered = sorted(fus)
        for i, a in enumerate(ordered):
            for b in ordered[i + 1:]:
                v = index.value(a, b)
                if v is not None and v >= floor:
                    writer.writerow([a, b, f"{v:.6f}"])
                    written += 1
    return written
