import numpy as np
import pytest

from scdn.embedding.evaluation import auc_score, link_prediction_eval, threshold_metrics
from scdn.embedding.model import GraphContext, ModelParams, TrainConfig, forward
from scdn.embedding.store import (EmbeddingTable, PROVENANCE_LEARNED, estimate_cold_start)
from scdn.embedding.training import (TrainingPairSets, _pair_terms, eq6_loss,
                                     loss_and_grad, train)
from scdn.errors import ValidationError
from scdn.network import ExtendedNetwork, build_amhen, make_fu_id

SC = "weekday-peak"


def toy_graph(seed=0, n=10):
    rng = np.random.default_rng(seed)
    fus = [make_fu_id(f"P{i % 3}", f"D{i}", SC) for i in range(n)]
    attrs = {fu: rng.normal(size=5) for fu in fus}
    seqs = []
    for _ in range(6):
        seqs.append((fus[0:4], fus[0:4]))
        seqs.append((fus[4:8], fus[4:8]))
        seqs.append((fus[8:], fus[8:]))
    return build_amhen(seqs, attrs)


class TestLossTerms:
    def test_positive_identical_embeddings_contribute_zero(self):
        terms, _ = _pair_terms(np.array([1.0]), positive=True, margin=0.3,
                               loss_mode="margin")
        assert terms[0] == pytest.approx(0.0)

    def test_negative_at_margin_contributes_zero(self):
        terms, grad = _pair_terms(np.array([0.3]), positive=False, margin=0.3,
                                  loss_mode="margin")
        assert terms[0] == pytest.approx(0.0)
        assert grad[0] == 0.0

    def test_negative_beyond_margin(self):
        terms, _ = _pair_terms(np.array([1.0]), positive=False, margin=0.3,
                               loss_mode="margin")
        assert terms[0] == pytest.approx(0.7)

    def test_hinge_never_negative(self):
        cos = np.linspace(-1, 1, 21)
        terms, _ = _pair_terms(cos, positive=False, margin=0.3, loss_mode="margin")
        assert (terms >= 0).all()
        assert np.allclose(terms[cos <= 0.3], 0.0)

    def test_eq6_matches_manual_cosine_sum(self):
        amhen = toy_graph()
        cfg = TrainConfig(embedding_dim=6, edge_embedding_dim=3, attention_dim=2)
        ctx = GraphContext.from_amhen(amhen)
        params = ModelParams.init(np.random.default_rng(1), ctx.attrs.shape[1], cfg)
        pos = {"pickup": np.array([[0, 1], [2, 3]]), "delivery": np.array([[4, 5]])}
        neg = {"pickup": np.array([[0, 8]]), "delivery": np.array([[1, 9], [2, 7]])}
        pairs = TrainingPairSets.from_config(cfg, pos, neg)
        value = eq6_loss(params, ctx, pairs)

        state = forward(params, ctx)

        def cos(vmat, i, j):
            a, b = vmat[i], vmat[j]
            return a @ b / (np.linalg.norm(a) * np.linalg.norm(b))

        manual = 0.0
        for t, arr in pos.items():
            manual += np.mean([1 - cos(state.vectors[t], i, j) for i, j in arr])
        for t, arr in neg.items():
            manual += np.mean([max(0.0, cos(state.vectors[t], i, j) - 0.3)
                               for i, j in arr])
        assert value == pytest.approx(manual, rel=1e-12)

    def test_loss_non_negative(self):
        amhen = toy_graph(seed=2)
        cfg = TrainConfig(embedding_dim=6, edge_embedding_dim=3, attention_dim=2)
        ctx = GraphContext.from_amhen(amhen)
        for seed in range(5):
            params = ModelParams.init(np.random.default_rng(seed),
                                      ctx.attrs.shape[1], cfg)
            pairs = TrainingPairSets.from_config(
                cfg, positives={"pickup": np.array([[0, 1]]),
                                "delivery": np.array([[2, 3]])},
                negatives={"pickup": np.array([[4, 5]]),
                           "delivery": np.array([[6, 7]])})
            assert eq6_loss(params, ctx, pairs) >= 0.0

    def test_pair_sets_validate_disjoint(self):
        cfg = TrainConfig()
        pairs = TrainingPairSets.from_config(
            cfg, positives={"pickup": np.array([[0, 1]]),
                            "delivery": np.zeros((0, 2), dtype=int)},
            negatives={"pickup": np.array([[0, 1]]),
                       "delivery": np.zeros((0, 2), dtype=int)})
        with pytest.raises(ValidationError):
            pairs.validate()


class TestTrain:
    CFG = dict(embedding_dim=12, edge_embedding_dim=6, attention_dim=4,
               walks_per_node=6, max_epochs=6, batch_size=64, patience_epochs=6)

    def test_loss_decreases(self):
        amhen = toy_graph()
        result = train(amhen, TrainConfig(**self.CFG), rng_seed=0)
        assert result.epoch_losses[-1] < result.epoch_losses[0]

    def test_deterministic_under_seed(self):
        amhen = toy_graph()
        r1 = train(amhen, TrainConfig(**self.CFG), rng_seed=5)
        r2 = train(amhen, TrainConfig(**self.CFG), rng_seed=5)
        assert np.array_equal(r1.table.overall, r2.table.overall)
        assert np.array_equal(r1.table.pickup, r2.table.pickup)
        assert r1.epoch_losses == r2.epoch_losses

    def test_overall_is_mean_of_type_vectors(self):
        amhen = toy_graph()
        result = train(amhen, TrainConfig(**self.CFG), rng_seed=1)
        mean = 0.5 * (result.table.pickup + result.table.delivery)
        assert np.allclose(result.table.overall, mean)
        assert all(result.table.provenance_of(fu) == "learned"
                   for fu in result.table.fus)


class TestStore:
    def table(self):
        rng = np.random.default_rng(0)
        fus = [make_fu_id(f"P{i}", f"D{i}", SC) for i in range(4)]
        mk = lambda: rng.normal(size=(4, 6)).astype(np.float32).astype(np.float64)
        return EmbeddingTable(fus=fus, overall=mk(), pickup=mk(), delivery=mk(),
                              provenance=np.array([0, 0, 1, 0], dtype=np.uint8))

    def test_binary_round_trip(self, tmp_path):
        table = self.table()
        path = tmp_path / "emb.bin"
        table.save_binary(path)
        loaded = EmbeddingTable.load_binary(path)
        assert loaded.fus == table.fus
        assert np.array_equal(loaded.overall, table.overall)
        assert np.array_equal(loaded.provenance, table.provenance)
        assert loaded.provenance_of(table.fus[2]) == "estimated"

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
        with pytest.raises(ValidationError):
            EmbeddingTable.load_binary(path)

    def test_jsonl_export(self, tmp_path):
        table = self.table()
        path = tmp_path / "emb.jsonl"
        table.save_jsonl(path)
        lines = path.read_text().splitlines()
        assert len(lines) == 4


class TestColdStart:
    def table(self):
        fus = [make_fu_id("P0", f"D{i}", SC) for i in range(2)]
        vec = np.array([[1.0, 0.0], [0.0, 1.0]])
        return EmbeddingTable(fus=fus, overall=vec.copy(), pickup=vec * 2,
                              delivery=vec * 3,
                              provenance=np.zeros(2, dtype=np.uint8))

    def test_single_neighbor_copies_vectors(self):
        table = self.table()
        absent = make_fu_id("P0", "D9", SC)
        net = ExtendedNetwork(adjacency={absent: [table.fus[0]]}, excluded=[])
        out = estimate_cold_start(table, net)
        assert out.provenance_of(absent) == "estimated"
        assert np.allclose(out.vector(absent), table.overall[0])
        assert np.allclose(out.vector(absent, "pickup"), table.pickup[0])

    def test_mean_of_two_neighbors(self):
        table = self.table()
        absent = make_fu_id("P0", "D9", SC)
        net = ExtendedNetwork(adjacency={absent: list(table.fus)}, excluded=[])
        out = estimate_cold_start(table, net)
        assert np.allclose(out.vector(absent), table.overall.mean(axis=0))

    def test_no_neighbors_stays_absent(self):
        table = self.table()
        absent = make_fu_id("P1", "D9", SC)
        net = ExtendedNetwork(adjacency={absent: []}, excluded=[])
        out = estimate_cold_start(table, net)
        assert absent not in out
        assert out.provenance_of(absent) == "absent"

    def test_estimated_neighbors_do_not_propagate(self):
        table = self.table()
        first = make_fu_id("P0", "D8", SC)
        second = make_fu_id("P0", "D9", SC)
        net = ExtendedNetwork(adjacency={first: [table.fus[0]], second: [first]},
                              excluded=[])
        out = estimate_cold_start(table, net)
        assert first in out and second not in out

    def test_coverage_non_decreasing(self):
        table = self.table()
        universe = list(table.fus) + [make_fu_id("P0", "D9", SC)]
        net = ExtendedNetwork(adjacency={universe[-1]: [table.fus[0]]}, excluded=[])
        out = estimate_cold_start(table, net)
        assert out.coverage(universe) > table.coverage(universe)


class TestLinkPredictionEval:
    def test_perfect_separation_gives_auc_one(self):
        assert auc_score(np.array([0.9, 0.8]), np.array([0.1, 0.2])) == 1.0

    def test_random_scores_near_half(self):
        rng = np.random.default_rng(0)
        aucs = [auc_score(rng.normal(size=300), rng.normal(size=300))
                for _ in range(30)]
        assert abs(np.mean(aucs) - 0.5) < 0.05

    def test_threshold_metrics_bounds(self):
        m = threshold_metrics(np.array([0.8, 0.7]), np.array([-0.5, -0.6]))
        assert m["f1"] == 1.0 and m["pr"] == 1.0

    def test_missing_nodes_skipped_and_counted(self):
        fus = [make_fu_id("P0", f"D{i}", SC) for i in range(3)]
        vecs = np.array([[1.0, 0.0], [0.9, 0.1], [0.0, 1.0]])
        table = EmbeddingTable(fus=fus, overall=vecs, pickup=vecs, delivery=vecs,
                               provenance=np.zeros(3, dtype=np.uint8))
        ghost = make_fu_id("P9", "D9", SC)
        edges = {"pickup": {"positive": [(fus[0], fus[1]), (fus[0], ghost)],
                            "negative": [(fus[0], fus[2])]},
                 "delivery": {"positive": [(fus[0], fus[1])],
                              "negative": [(fus[1], fus[2])]}}
        out = link_prediction_eval(table, edges)
        assert out["skipped_pairs"] == 1
        assert 0.0 <= out["mean"]["auc"] <= 1.0
        assert out["per_type"]["pickup"]["auc"] == 1.0
