"""End-to-end glue: trajectories -> sessions -> graph -> embeddings -> indices."""

from __future__ import annotations

import logging
from collections import defaultdict
from typing import Iterable, Mapping, Sequence

import numpy as np

from .embedding import TrainConfig, train
from .embedding.store import EmbeddingTable
from .indices import FeiTable, HppIndex, build_fei_table, geographic_neighborhoods
from .network import (Amhen, AoiStats, FlowUnit, FuId, OrderRecord, Session,
                      TrajectoryEvent, build_amhen, build_fu_sequences,
                      compute_node_attributes, filter_sc_sessions, segment_sessions)

logger = logging.getLogger(__name__)


def sessions_from_events(events: Iterable[TrajectoryEvent],
                         gap_threshold_s: float = 1800.0) -> list[Session]:
    """Per-courier segmentation of a mixed event stream."""
    per_courier: dict[str, list[TrajectoryEvent]] = defaultdict(list)
    for ev in events:
        per_courier[ev.courier_id].append(ev)
    sessions: list[Session] = []
    for courier_id in sorted(per_courier):
        stream = sorted(per_courier[courier_id], key=lambda e: (e.timestamp, e.order_id))
        sessions.extend(segment_sessions(stream, gap_threshold_s))
    return sessions


def build_graph(events: Iterable[TrajectoryEvent],
                courier_rank: Mapping[str, float],
                order_history: Sequence[OrderRecord],
                aoi_stats: AoiStats,
                scenario: str,
                gap_threshold_s: float = 1800.0,
                window_days: float | None = None) -> Amhen:
    """The full graph-construction pipeline from raw trajectories."""
    sessions = sessions_from_events(events, gap_threshold_s)
    skilled = filter_sc_sessions(sessions, courier_rank, gap_threshold_s=gap_threshold_s)
    logger.info("sessions: %d total, %d from skilled couriers", len(sessions), len(skilled))
    sequences = [build_fu_sequences(s) for s in skilled]
    fus = sorted({fu for pair in sequences for seq in pair for fu in seq})
    if window_days is None:
        span = [r.placed_at for r in order_history]
        window_days = max((max(span) - min(span)) / 86_400.0, 1e-3) if span else 1.0
    attrs = compute_node_attributes(order_history, aoi_stats, scenario,
                                    fus=fus, window_days=window_days)
    return build_amhen(sequences, attrs.vectors)


def train_embeddings(amhen: Amhen, cfg: TrainConfig | None = None,
                     seed: int = 0):
    return train(amhen, cfg or TrainConfig(), rng_seed=seed)


def indices_from_table(table: EmbeddingTable, fus: Sequence[FlowUnit],
                       centroids, volumes: Mapping[FuId, float],
                       neighbor_radius_m: float = 1000.0,
                       ) -> tuple[HppIndex, FeiTable]:
    hpp_index = HppIndex(table)
    neighborhoods = geographic_neighborhoods(fus, centroids, neighbor_radius_m)
    fei_table = build_fei_table(table, neighborhoods, volumes)
    return hpp_index, fei_table
