"""Link-prediction evaluation and graph ablations."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from ..network import Amhen, FuId, partition_regions
from .store import EmbeddingTable

logger = logging.getLogger(__name__)

_KIND_FOR_TYPE = {"pickup": "pickup", "delivery": "delivery"}


def auc_score(pos_scores: np.ndarray, neg_scores: np.ndarray) -> float:
    """ROC-AUC via the rank-sum statistic (ties get half credit)."""
    pos_scores = np.asarray(pos_scores, dtype=np.float64)
    neg_scores = np.asarray(neg_scores, dtype=np.float64)
    if pos_scores.size == 0 or neg_scores.size == 0:
        return 0.5
    ranks = rankdata(np.concatenate([pos_scores, neg_scores]))
    rank_sum = ranks[:pos_scores.size].sum()
    n_pos, n_neg = pos_scores.size, neg_scores.size
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def threshold_metrics(pos_scores: np.ndarray, neg_scores: np.ndarray) -> dict[str, float]:
    """F1 and precision at threshold 0 after centering all scores."""
    scores = np.concatenate([pos_scores, neg_scores])
    labels = np.concatenate([np.ones(len(pos_scores)), np.zeros(len(neg_scores))])
    centered = scores - scores.mean() if scores.size else scores
    pred = centered > 0
    tp = float(np.sum(pred & (labels == 1)))
    fp = float(np.sum(pred & (labels == 0)))
    fn = float(np.sum(~pred & (labels == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"f1": f1, "pr": precision}


def _pair_scores(table: EmbeddingTable, pairs: list[tuple[FuId, FuId]], kind: str,
                 ) -> tuple[np.ndarray, int]:
    scores, skipped = [], 0
    matrix = getattr(table, kind)
    for a, b in pairs:
        ia, ib = table.index.get(a), table.index.get(b)
        if ia is None or ib is None:
            skipped += 1
            continue
        va, vb = matrix[ia], matrix[ib]
        na, nb = np.linalg.norm(va), np.linalg.norm(vb)
        scores.append(float(va @ vb / (na * nb)) if na > 0 and nb > 0 else 0.0)
    return np.asarray(scores), skipped


def link_prediction_eval(table: EmbeddingTable,
                         test_edges: dict[str, dict[str, list[tuple[FuId, FuId]]]],
                         ) -> dict:
    """Score held-out edges with per-type cosine similarity.

    ``test_edges`` maps edge type to {"positive": pairs, "negative": pairs}.
    Pairs touching FUs absent from the table are skipped and counted.
    """
    per_type = {}
    skipped = 0
    for edge_type, split in test_edges.items():
        pos, miss_p = _pair_scores(table, split["positive"], _KIND_FOR_TYPE[edge_type])
        neg, miss_n = _pair_scores(table, split["negative"], _KIND_FOR_TYPE[edge_type])
        skipped += miss_p + miss_n
        per_type[edge_type] = {"auc": auc_score(pos, neg), **threshold_metrics(pos, neg)}
    means = {key: float(np.mean([m[key] for m in per_type.values()]))
             for key in ("auc", "f1", "pr")} if per_type else {}
    return {"per_type": per_type, "mean": means, "skipped_pairs": skipped}


@dataclass
class HoldoutSplit:
    train_graph: Amhen
    test_edges: dict[str, dict[str, list[tuple[FuId, FuId]]]]


def holdout_split(amhen: Amhen, rng: np.random.Generator,
                  fraction: float = 0.1, hop_floor: int = 3) -> HoldoutSplit:
    """Remove a fraction of node pairs per edge type for testing.

    Test negatives are regional non-edges sampled with the training rule;
    the train graph drops the held-out pairs and recomputes its regions.
    """
    from .sampling import sample_negatives

    test_edges = {}
    reduced = {}
    for edge_type in ("pickup", "delivery"):
        pairs = sorted(amhen.edges[edge_type])
        n_test = max(1, int(round(len(pairs) * fraction))) if pairs else 0
        picked = rng.choice(len(pairs), size=n_test, replace=False) if n_test else []
        picked_set = {pairs[i] for i in np.sort(picked)}
        positives = np.array(sorted(picked_set), dtype=np.int64) if picked_set \
            else np.zeros((0, 2), dtype=np.int64)
        all_edges = np.array(pairs, dtype=np.int64) if pairs else np.zeros((0, 2), dtype=np.int64)
        negatives = sample_negatives(amhen, amhen.regions, all_edges,
                                     len(positives), rng, edge_type=edge_type,
                                     hop_floor=hop_floor, mode="regional")
        to_fu = lambda arr: [(amhen.fus[i], amhen.fus[j]) for i, j in arr.tolist()]
        test_edges[edge_type] = {"positive": to_fu(positives), "negative": to_fu(negatives)}
        reduced[edge_type] = {pair: count for pair, count in amhen.edges[edge_type].items()
                              if pair not in picked_set}

    train_graph = Amhen(fus=list(amhen.fus), attrs=amhen.attrs.copy(),
                        edges=reduced, regions=amhen.regions.copy())
    assignment = partition_regions(train_graph)
    train_graph.regions = np.array([assignment[fu] for fu in train_graph.fus], dtype=np.int64)
    return HoldoutSplit(train_graph=train_graph, test_edges=test_edges)


def drop_edge_type(amhen: Amhen, edge_type: str) -> Amhen:
    """Ablation: remove every edge of one type."""
    edges = {t: (dict(amhen.edges[t]) if t != edge_type else {}) for t in amhen.edges}
    out = Amhen(fus=list(amhen.fus), attrs=amhen.attrs.copy(), edges=edges,
                regions=amhen.regions.copy())
    assignment = partition_regions(out)
    out.regions = np.array([assignment[fu] for fu in out.fus], dtype=np.int64)
    return out


def randomize_attrs(amhen: Amhen, rng: np.random.Generator) -> Amhen:
    """Ablation: replace informative attributes with node-specific noise.

    Nodes stay distinguishable (the model can still memorize them) but the
    attributes no longer encode geography or order structure.
    """
    attrs = rng.normal(size=amhen.attrs.shape)
    return Amhen(fus=list(amhen.fus), attrs=attrs, edges={t: dict(e) for t, e in
                 amhen.edges.items()}, regions=amhen.regions.copy())
