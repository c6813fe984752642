"""Walk generation and training-pair sampling."""

from __future__ import annotations

import logging
from collections import deque
from typing import Iterable

import numpy as np

from .. import kernels

logger = logging.getLogger(__name__)


def generate_walks(amhen, edge_type: str, walk_length: int, walks_per_node: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Edge-count-weighted random walks restricted to one edge type.

    Returns an int array (walks, walk_length) padded with -1; a walk from
    an isolated node stops at length 1.
    """
    if walk_length < 2:
        raise ValueError("walk_length must be at least 2")
    n = amhen.n_nodes
    if n == 0:
        return np.zeros((0, walk_length), dtype=np.int64)
    indptr, indices, cumprob = amhen.csr(edge_type)
    starts = np.tile(np.arange(n, dtype=np.int64), walks_per_node)
    uniforms = rng.random((starts.shape[0], walk_length - 1))
    return kernels.weighted_walks(indptr, indices, cumprob, starts, walk_length, uniforms)


def extract_positive_pairs(walks: Iterable[Iterable[int]] | np.ndarray,
                           window: int) -> np.ndarray:
    """Deduplicated skip-gram pairs within the sampling window.

    Pairs are unordered (stored i < j); identical-node pairs are dropped.
    """
    if window < 1:
        raise ValueError("window must be at least 1")
    pairs: set[tuple[int, int]] = set()
    for walk in walks:
        nodes = [int(v) for v in walk if int(v) >= 0]
        for t, vt in enumerate(nodes):
            for k in range(t + 1, min(t + window + 1, len(nodes))):
                vk = nodes[k]
                if vt != vk:
                    pairs.add((vt, vk) if vt < vk else (vk, vt))
    if not pairs:
        return np.zeros((0, 2), dtype=np.int64)
    return np.array(sorted(pairs), dtype=np.int64)


def _neighbors_within(amhen, edge_type: str, depth: int) -> list[set[int]]:
    """Per-node set of nodes at graph distance 1..depth on one edge type."""
    nbrs = amhen.neighbor_lists(edge_type)
    adj = [set(j for j, _ in lst) for lst in nbrs]
    out: list[set[int]] = []
    for src in range(amhen.n_nodes):
        seen = {src}
        frontier = deque([(src, 0)])
        reach: set[int] = set()
        while frontier:
            node, dist = frontier.popleft()
            if dist == depth:
                continue
            for nxt in adj[node]:
                if nxt not in seen:
                    seen.add(nxt)
                    reach.add(nxt)
                    frontier.append((nxt, dist + 1))
        out.append(reach)
    return out


def sample_negatives(amhen, regions: np.ndarray, positives: np.ndarray, count: int,
                     rng: np.random.Generator, edge_type: str,
                     hop_floor: int = 3, mode: str = "regional") -> np.ndarray:
    """Uniform same-region node pairs excluding positives and near neighbors.

    Pairs closer than ``hop_floor`` hops on the edge type are excluded
    (hop_floor 3 bans distance <= 2).  ``mode="random"`` is the ablation
    that samples city-wide and only excludes positive pairs.
    """
    if hop_floor <= 2:
        raise ValueError("hop_floor must exceed 2")
    if count <= 0:
        return np.zeros((0, 2), dtype=np.int64)
    n = amhen.n_nodes
    forbidden = {tuple(sorted(p)) for p in np.asarray(positives).reshape(-1, 2).tolist()}
    if mode == "regional":
        near = _neighbors_within(amhen, edge_type, hop_floor - 1)
        for i, reach in enumerate(near):
            for j in reach:
                if i < j:
                    forbidden.add((i, j))
        region_nodes = [np.nonzero(regions == r)[0] for r in np.unique(regions)]
        region_nodes = [nodes for nodes in region_nodes if len(nodes) >= 2]
        if not region_nodes:
            logger.warning("negative sampling: no region holds two nodes")
            return np.zeros((0, 2), dtype=np.int64)
        weights = np.array([len(nodes) * (len(nodes) - 1) for nodes in region_nodes],
                           dtype=np.float64)
        weights /= weights.sum()
    elif mode == "random":
        region_nodes = [np.arange(n)]
        weights = np.array([1.0])
    else:
        raise ValueError(f"unknown mode {mode!r}")

    total_pairs = int(sum(len(nodes) * (len(nodes) - 1) // 2 for nodes in region_nodes))
    if total_pairs <= 500_000:
        # small universe: enumerate the allowed pairs and sample directly
        allowed: list[tuple[int, int]] = []
        for nodes in region_nodes:
            ii, jj = np.triu_indices(len(nodes), k=1)
            for a, b in zip(nodes[ii], nodes[jj]):
                pair = (int(a), int(b)) if a < b else (int(b), int(a))
                if pair not in forbidden:
                    allowed.append(pair)
        if len(allowed) < count:
            logger.warning("negative sampling: requested %d pairs, only %d exist",
                           count, len(allowed))
        if not allowed:
            return np.zeros((0, 2), dtype=np.int64)
        allowed_arr = np.array(sorted(allowed), dtype=np.int64)
        take = rng.permutation(len(allowed_arr))[:count]
        return allowed_arr[take]

    out: list[tuple[int, int]] = []
    chosen: set[tuple[int, int]] = set()
    attempts = 0
    max_attempts = 200 * count + 1000
    while len(out) < count and attempts < max_attempts:
        attempts += 1
        nodes = region_nodes[rng.choice(len(region_nodes), p=weights)]
        i, j = rng.choice(len(nodes), size=2, replace=False)
        pair = (int(nodes[i]), int(nodes[j]))
        pair = (min(pair), max(pair))
        if pair in forbidden or pair in chosen:
            continue
        chosen.add(pair)
        out.append(pair)
    if len(out) < count:
        logger.warning("negative sampling: requested %d pairs, found %d", count, len(out))
    if not out:
        return np.zeros((0, 2), dtype=np.int64)
    return np.array(out, dtype=np.int64)
