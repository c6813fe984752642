"""File formats: trajectory/history JSON-Lines, centroid CSV, graph JSON."""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ValidationError
from .network import (Amhen, AoiId, GeoPoint, OrderRecord, TrajectoryEvent,
                      partition_regions)

logger = logging.getLogger(__name__)

GRAPH_FORMAT = "scdn-graph"
GRAPH_VERSION = 1


def read_trajectory_events(path: str | Path) -> list[TrajectoryEvent]:
    events = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            events.append(TrajectoryEvent(
                courier_id=rec["courier_id"], order_id=rec["order_id"], fu=rec["fu"],
                action=rec["action"], timestamp=float(rec["timestamp"])))
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise ValidationError(f"{path}:{lineno}: bad trajectory record: {exc}") from exc
    return events


def write_trajectory_events(events: Iterable[TrajectoryEvent], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(json.dumps({"courier_id": ev.courier_id, "order_id": ev.order_id,
                                 "fu": ev.fu, "action": ev.action,
                                 "timestamp": ev.timestamp}, sort_keys=True) + "\n")


def read_order_history(path: str | Path) -> list[OrderRecord]:
    records = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append(OrderRecord(**json.loads(line)))
        except (TypeError, json.JSONDecodeError) as exc:
            raise ValidationError(f"{path}:{lineno}: bad order record: {exc}") from exc
    return records


def write_order_history(records: Iterable[OrderRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({
                "order_id": rec.order_id, "fu": rec.fu, "pickup_aoi": rec.pickup_aoi,
                "delivery_aoi": rec.delivery_aoi, "scenario": rec.scenario,
                "placed_at": rec.placed_at, "pickup_at": rec.pickup_at,
                "delivered_at": rec.delivered_at,
                "delivery_distance_m": rec.delivery_distance_m,
                "promised_deadline": rec.promised_deadline}, sort_keys=True) + "\n")


def read_centroids_csv(path: str | Path) -> dict[AoiId, GeoPoint]:
    out: dict[AoiId, GeoPoint] = {}
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or \
                {"aoi_id", "lat", "lon"} - set(reader.fieldnames):
            raise ValidationError(f"{path}: expected header aoi_id,lat,lon")
        for lineno, row in enumerate(reader, 2):
            try:
                out[row["aoi_id"]] = GeoPoint(float(row["lat"]), float(row["lon"]))
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"{path}:{lineno}: bad centroid row: {exc}") from exc
    return out


def graph_to_json(amhen: Amhen) -> dict:
    """Versioned graph document; node order and edge order are canonical."""
    nodes = [{"fu": fu, "attrs": [float(x) for x in amhen.attrs[i]],
              "region": int(amhen.regions[i])}
             for i, fu in enumerate(amhen.fus)]
    doc = {"format": GRAPH_FORMAT, "version": GRAPH_VERSION, "nodes": nodes}
    for edge_type in ("pickup", "delivery"):
        doc[f"edges_{edge_type}"] = [[i, j, int(c)] for (i, j), c in
                                     sorted(amhen.edges[edge_type].items())]
    return doc


def graph_from_json(doc: dict) -> Amhen:
    if doc.get("format") != GRAPH_FORMAT:
        raise ValidationError("not a graph document")
    if doc.get("version") != GRAPH_VERSION:
        raise ValidationError(f"unsupported graph version {doc.get('version')}")
    fus = [n["fu"] for n in doc["nodes"]]
    attrs = np.array([n["attrs"] for n in doc["nodes"]], dtype=np.float64) \
        if fus else np.zeros((0, 0))
    regions = np.array([n["region"] for n in doc["nodes"]], dtype=np.int64)
    edges = {}
    for edge_type in ("pickup", "delivery"):
        edges[edge_type] = {(int(i), int(j)): int(c)
                            for i, j, c in doc.get(f"edges_{edge_type}", [])}
    amhen = Amhen(fus=fus, attrs=attrs, edges=edges, regions=regions)
    amhen.validate()
    return amhen


def save_graph(amhen: Amhen, path: str | Path) -> None:
    Path(path).write_text(json.dumps(graph_to_json(amhen), sort_keys=True),
                          encoding="utf-8")


def load_graph(path: str | Path) -> Amhen:
    return graph_from_json(json.loads(Path(path).read_text(encoding="utf-8")))
