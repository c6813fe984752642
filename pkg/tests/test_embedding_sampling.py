import logging

import numpy as np
import pytest

from scdn.embedding.sampling import (extract_positive_pairs, generate_walks,
                                     sample_negatives)
from scdn.network import build_amhen, make_fu_id

SC = "weekday-peak"


def graph(edges, n):
    fus = [make_fu_id(f"P{i}", f"D{i}", SC) for i in range(n)]
    rng = np.random.default_rng(0)
    attrs = {fu: rng.normal(size=3) for fu in fus}
    seqs = [([fus[i] for i in seq], []) for seq in edges]
    return build_amhen(seqs, attrs), fus


class TestWalks:
    def test_walk_length_bounded(self):
        amhen, _ = graph([[0, 1, 2, 3, 4, 0]], 5)
        walks = generate_walks(amhen, "pickup", walk_length=10, walks_per_node=4,
                               rng=np.random.default_rng(0))
        assert walks.shape == (20, 10)
        assert ((walks >= -1) & (walks < 5)).all()

    def test_path_graph_from_middle(self):
        amhen, fus = graph([[0, 1], [1, 2]], 3)
        b = amhen.index[fus[1]]
        walks = generate_walks(amhen, "pickup", walk_length=2, walks_per_node=50,
                               rng=np.random.default_rng(1))
        from_b = walks[walks[:, 0] == b]
        nxt = set(from_b[:, 1].tolist())
        expected = {amhen.index[fus[0]], amhen.index[fus[2]]}
        assert nxt == expected

    def test_isolated_node_stops_immediately(self):
        amhen, fus = graph([[0, 1], [2]], 3)
        i = amhen.index[fus[2]]
        walks = generate_walks(amhen, "pickup", walk_length=6, walks_per_node=2,
                               rng=np.random.default_rng(2))
        mine = walks[walks[:, 0] == i]
        assert (mine[:, 1:] == -1).all()

    def test_edge_counts_bias_transitions(self):
        # node 0 connects to 1 (count 9) and 2 (count 1)
        seqs = [[0, 1]] * 9 + [[0, 2]]
        amhen, fus = graph(seqs, 3)
        walks = generate_walks(amhen, "pickup", walk_length=2, walks_per_node=400,
                               rng=np.random.default_rng(3))
        zero = amhen.index[fus[0]]
        nxt = walks[walks[:, 0] == zero][:, 1]
        share_heavy = np.mean(nxt == amhen.index[fus[1]])
        assert share_heavy > 0.8

    def test_deterministic_under_seed(self):
        amhen, _ = graph([[0, 1, 2], [2, 3, 4]], 5)
        w1 = generate_walks(amhen, "pickup", 8, 5, np.random.default_rng(42))
        w2 = generate_walks(amhen, "pickup", 8, 5, np.random.default_rng(42))
        assert np.array_equal(w1, w2)


class TestPositivePairs:
    def test_window_one(self):
        pairs = extract_positive_pairs([[0, 1, 2]], window=1)
        assert set(map(tuple, pairs.tolist())) == {(0, 1), (1, 2)}

    def test_window_two(self):
        pairs = extract_positive_pairs([[0, 1, 2]], window=2)
        assert set(map(tuple, pairs.tolist())) == {(0, 1), (1, 2), (0, 2)}

    def test_singleton_walk_empty(self):
        assert extract_positive_pairs([[0]], window=3).size == 0

    def test_padding_and_self_pairs_ignored(self):
        pairs = extract_positive_pairs(np.array([[0, 1, 0, -1]]), window=3)
        assert set(map(tuple, pairs.tolist())) == {(0, 1)}

    def test_deduplicated(self):
        pairs = extract_positive_pairs([[0, 1], [1, 0], [0, 1, 0]], window=2)
        assert pairs.tolist() == [[0, 1]]


class TestNegatives:
    def build(self):
        # two regions: {0,1,2,3, 4} chain and {5,6} pair
        edges = [[0, 1], [1, 2], [2, 3], [3, 4], [5, 6]]
        return graph(edges, 7)

    def test_positive_pairs_excluded(self):
        amhen, _ = self.build()
        positives = np.array([[0, 3]])
        out = sample_negatives(amhen, amhen.regions, positives, count=50,
                               rng=np.random.default_rng(0), edge_type="pickup")
        assert [0, 3] not in out.tolist()

    def test_cross_region_never_emitted(self):
        amhen, _ = self.build()
        out = sample_negatives(amhen, amhen.regions, np.zeros((0, 2), dtype=int),
                               count=50, rng=np.random.default_rng(1),
                               edge_type="pickup")
        for i, j in out.tolist():
            assert amhen.regions[i] == amhen.regions[j]

    def test_close_pairs_excluded(self):
        amhen, _ = self.build()
        out = sample_negatives(amhen, amhen.regions, np.zeros((0, 2), dtype=int),
                               count=50, rng=np.random.default_rng(2),
                               edge_type="pickup")
        # chain: distance(0,1)=1, (0,2)=2 excluded; (0,3)=3, (0,4)=4 allowed
        pairs = set(map(tuple, out.tolist()))
        assert pairs <= {(0, 3), (0, 4), (1, 4)}

    def test_small_region_returns_fewer_with_warning(self, caplog):
        amhen, _ = self.build()
        with caplog.at_level(logging.WARNING):
            out = sample_negatives(amhen, amhen.regions, np.zeros((0, 2), dtype=int),
                                   count=1000, rng=np.random.default_rng(3),
                                   edge_type="pickup")
        assert len(out) < 1000
        assert any("negative sampling" in r.message for r in caplog.records)

    def test_hop_floor_validated(self):
        amhen, _ = self.build()
        with pytest.raises(ValueError):
            sample_negatives(amhen, amhen.regions, np.zeros((0, 2), dtype=int),
                             count=5, rng=np.random.default_rng(4),
                             edge_type="pickup", hop_floor=2)

    def test_random_mode_ignores_regions(self):
        amhen, _ = self.build()
        out = sample_negatives(amhen, amhen.regions, np.zeros((0, 2), dtype=int),
                               count=200, rng=np.random.default_rng(5),
                               edge_type="pickup", mode="random")
        crossing = [1 for i, j in out.tolist() if amhen.regions[i] != amhen.regions[j]]
        assert crossing  # city-wide sampling does produce cross-region pairs
