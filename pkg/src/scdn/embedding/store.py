"""Embedding table: lookup, persistence, cold-start estimation."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import ValidationError
from ..network import ExtendedNetwork, FuId

MAGIC = b"SCDNEMB1"
VERSION = 1

PROVENANCE_LEARNED = 0
PROVENANCE_ESTIMATED = 1
_PROVENANCE_NAMES = {PROVENANCE_LEARNED: "learned", PROVENANCE_ESTIMATED: "estimated"}


@dataclass
class EmbeddingTable:
    """Per-FU overall/pickup/delivery vectors; FUs not present are absent."""

    fus: list[FuId]
    overall: np.ndarray   # N x d
    pickup: np.ndarray
    delivery: np.ndarray
    provenance: np.ndarray  # uint8 per row

    def __post_init__(self):
        self.index = {fu: i for i, fu in enumerate(self.fus)}

    @property
    def dim(self) -> int:
        return self.overall.shape[1]

    def __len__(self) -> int:
        return len(self.fus)

    def __contains__(self, fu: FuId) -> bool:
        return fu in self.index

    def vector(self, fu: FuId, kind: str = "overall") -> np.ndarray | None:
        row = self.index.get(fu)
        if row is None:
            return None
        return getattr(self, kind)[row]

    def provenance_of(self, fu: FuId) -> str:
        row = self.index.get(fu)
        if row is None:
            return "absent"
        return _PROVENANCE_NAMES[int(self.provenance[row])]

    def coverage(self, universe) -> float:
        universe = list(universe)
        if not universe:
            return 0.0
        return sum(1 for fu in universe if fu in self.index) / len(universe)

    # -- persistence ----------------------------------------------------
    # binary layout: magic, u32 version, u32 dim, u32 count, then per FU:
    # u16 key length, utf-8 key, u8 provenance, 3*dim little-endian f32
    # (overall, pickup, delivery).

    def save_binary(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<III", VERSION, self.dim, len(self.fus)))
            for row, fu in enumerate(self.fus):
                key = fu.encode("utf-8")
                fh.write(struct.pack("<H", len(key)))
                fh.write(key)
                fh.write(struct.pack("<B", int(self.provenance[row])))
                for arr in (self.overall, self.pickup, self.delivery):
                    fh.write(arr[row].astype("<f4").tobytes())

    @staticmethod
    def load_binary(path: str | Path) -> "EmbeddingTable":
        data = Path(path).read_bytes()
        if data[:8] != MAGIC:
            raise ValidationError(f"{path}: not an embedding table file")
        version, dim, count = struct.unpack_from("<III", data, 8)
        if version != VERSION:
            raise ValidationError(f"{path}: unsupported version {version}")
        offset = 8 + 12
        fus, prov = [], np.zeros(count, dtype=np.uint8)
        overall = np.zeros((count, dim))
        pickup = np.zeros((count, dim))
        delivery = np.zeros((count, dim))
        vec_bytes = 4 * dim
        for row in range(count):
            (key_len,) = struct.unpack_from("<H", data, offset)
            offset += 2
            fus.append(data[offset:offset + key_len].decode("utf-8"))
            offset += key_len
            prov[row] = data[offset]
            offset += 1
            for arr in (overall, pickup, delivery):
                arr[row] = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
                offset += vec_bytes
        return EmbeddingTable(fus=fus, overall=overall, pickup=pickup,
                              delivery=delivery, provenance=prov)

    def save_jsonl(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for row, fu in enumerate(self.fus):
                fh.write(json.dumps({
                    "fu": fu,
                    "provenance": _PROVENANCE_NAMES[int(self.provenance[row])],
                    "overall": self.overall[row].tolist(),
                    "pickup": self.pickup[row].tolist(),
                    "delivery": self.delivery[row].tolist(),
                }, sort_keys=True) + "\n")


def estimate_cold_start(table: EmbeddingTable,
                        extended: ExtendedNetwork | Mapping[FuId, list[FuId]],
                        ) -> EmbeddingTable:
    """Fill absent FUs with the mean of their learned geographic neighbors.

    Only neighbors whose vectors were actually learned contribute; FUs
    with no learned neighbor stay absent.  Coverage never decreases.
    """
    adjacency = extended.adjacency if isinstance(extended, ExtendedNetwork) else extended
    new_fus: list[FuId] = []
    new_rows: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    for fu in sorted(adjacency):
        if fu in table:
            continue
        learned = [n for n in adjacency[fu]
                   if n in table and table.provenance_of(n) == "learned"]
        if not learned:
            continue
        rows = [table.index[n] for n in learned]
        new_fus.append(fu)
        new_rows.append((table.overall[rows].mean(axis=0),
                         table.pickup[rows].mean(axis=0),
                         table.delivery[rows].mean(axis=0)))
    if not new_fus:
        return table
    overall = np.vstack([table.overall] + [r[0][None] for r in new_rows])
    pickup = np.vstack([table.pickup] + [r[1][None] for r in new_rows])
    delivery = np.vstack([table.delivery] + [r[2][None] for r in new_rows])
    provenance = np.concatenate([table.provenance,
                                 np.full(len(new_fus), PROVENANCE_ESTIMATED, dtype=np.uint8)])
    return EmbeddingTable(fus=table.fus + new_fus, overall=overall, pickup=pickup,
                          delivery=delivery, provenance=provenance)
