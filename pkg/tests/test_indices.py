import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scdn.embedding.store import EmbeddingTable
from scdn.indices import (HppIndex, build_fei_table, fei, geographic_neighborhoods,
                          hpp, seh_validate)
from scdn.network import FlowUnit, GeoPoint, make_fu_id

SC = "weekday-peak"


def table_from(vectors: dict[str, np.ndarray]) -> EmbeddingTable:
    fus = sorted(vectors)
    mat = np.array([vectors[f] for f in fus], dtype=np.float64)
    return EmbeddingTable(fus=fus, overall=mat, pickup=mat.copy(),
                          delivery=mat.copy(),
                          provenance=np.zeros(len(fus), dtype=np.uint8))


class TestHpp:
    def test_identical_vectors(self):
        t = table_from({"a": np.array([1.0, 2.0]), "b": np.array([1.0, 2.0])})
        assert hpp("a", "b", t) == pytest.approx(1.0)

    def test_orthogonal_vectors(self):
        t = table_from({"a": np.array([1.0, 0.0]), "b": np.array([0.0, 1.0])})
        assert hpp("a", "b", t) == pytest.approx(0.0)

    def test_analytic_cosine(self):
        t = table_from({"a": np.array([1.0, 0.0]), "b": np.array([1.0, 1.0])})
        assert hpp("a", "b", t) == pytest.approx(0.7071, abs=1e-4)

    def test_absent_is_unknown(self):
        t = table_from({"a": np.array([1.0, 0.0])})
        assert hpp("a", "zzz", t) is None

    def test_symmetric_and_self_one(self):
        rng = np.random.default_rng(0)
        t = table_from({f"f{i}": rng.normal(size=4) for i in range(6)})
        index = HppIndex(t)
        for i in t.fus:
            assert index.value(i, i) == pytest.approx(1.0)
            for j in t.fus:
                assert index.value(i, j) == index.value(j, i)

    def test_matrix_matches_pairwise(self):
        rng = np.random.default_rng(1)
        t = table_from({f"f{i}": rng.normal(size=3) for i in range(5)})
        index = HppIndex(t)
        mat = index.matrix(t.fus)
        for a, fa in enumerate(t.fus):
            for b, fb in enumerate(t.fus):
                assert mat[a, b] == pytest.approx(index.value(fa, fb), abs=1e-12)

    def test_zero_vector_guard(self):
        t = table_from({"a": np.zeros(3), "b": np.ones(3)})
        assert hpp("a", "b", t) == 0.0


class TestFei:
    def test_single_neighbor_weight_one(self):
        t = table_from({"a": np.array([1.0, 0.0]),
                        "b": np.array([0.8, 0.6])})
        raw = fei("a", t, ["b"], {"b": 10.0})
        assert raw == pytest.approx(0.8)

    def test_volume_weighted_mean(self):
        # neighbors with hpp 0.6 and 0.2, volumes 3 and 1 -> 0.5
        t = table_from({"a": np.array([1.0, 0.0]),
                        "b": np.array([0.6, 0.8]),
                        "c": np.array([0.2, np.sqrt(1 - 0.04)])})
        raw = fei("a", t, ["b", "c"], {"b": 3.0, "c": 1.0})
        assert raw == pytest.approx(0.5, abs=1e-9)

    def test_no_neighbors_zero(self):
        t = table_from({"a": np.array([1.0, 0.0])})
        assert fei("a", t, [], {}) == 0.0

    def test_all_zero_volumes_uniform_weights(self):
        t = table_from({"a": np.array([1.0, 0.0]),
                        "b": np.array([0.6, 0.8]),
                        "c": np.array([0.2, np.sqrt(1 - 0.04)])})
        raw = fei("a", t, ["b", "c"], {"b": 0.0, "c": 0.0})
        assert raw == pytest.approx(0.4, abs=1e-9)

    def test_normalization_spans_unit_interval(self):
        rng = np.random.default_rng(2)
        t = table_from({f"f{i}": rng.normal(size=4) for i in range(8)})
        nbrs = {f: [g for g in t.fus if g != f] for f in t.fus}
        volumes = {f: float(rng.uniform(1, 5)) for f in t.fus}
        ft = build_fei_table(t, nbrs, volumes)
        values = list(ft.normalized.values())
        assert min(values) == pytest.approx(0.0)
        assert max(values) == pytest.approx(1.0)
        raws = np.array([ft.raw[f] for f in t.fus])
        norms = np.array([ft.normalized[f] for f in t.fus])
        assert np.allclose(np.argsort(raws), np.argsort(norms))

    @given(st.floats(min_value=0.1, max_value=50.0))
    @settings(max_examples=20, deadline=None)
    def test_scale_invariance(self, scale):
        rng = np.random.default_rng(3)
        vectors = {f"f{i}": rng.normal(size=4) for i in range(5)}
        t1 = table_from(vectors)
        t2 = table_from({k: v * scale for k, v in vectors.items()})
        nbrs = {f: [g for g in t1.fus if g != f] for f in t1.fus}
        volumes = {f: 2.0 for f in t1.fus}
        f1 = build_fei_table(t1, nbrs, volumes)
        f2 = build_fei_table(t2, nbrs, volumes)
        for f in t1.fus:
            assert f1.raw[f] == pytest.approx(f2.raw[f], abs=1e-9)
        i1, i2 = HppIndex(t1), HppIndex(t2)
        assert i1.value("f0", "f1") == pytest.approx(i2.value("f0", "f1"), abs=1e-9)


class TestNeighborhoods:
    def test_same_or_nearby_aoi_rule(self):
        cent = {"P1": GeoPoint(31.0, 121.0),
                "P2": GeoPoint(31.0 + 900 / 111_320, 121.0),
                "P3": GeoPoint(31.0 + 5000 / 111_320, 121.0),
                "Da": GeoPoint(30.9, 121.0), "Db": GeoPoint(30.8, 121.0),
                "Dc": GeoPoint(30.7, 121.0)}
        fus = [FlowUnit("P1", "Da", SC), FlowUnit("P2", "Db", SC),
               FlowUnit("P3", "Dc", SC)]
        nbrs = geographic_neighborhoods(fus, cent, radius_m=1000.0)
        assert nbrs[fus[0].id] == [fus[1].id]   # pickups 900 m apart
        assert nbrs[fus[2].id] == []            # everything else far

    def test_scenarios_partition_neighborhoods(self):
        cent = {"P": GeoPoint(31.0, 121.0), "D": GeoPoint(31.01, 121.0)}
        a = FlowUnit("P", "D", "weekday-peak")
        b = FlowUnit("P", "D", "weekend-peak")
        nbrs = geographic_neighborhoods([a, b], cent)
        assert nbrs[a.id] == [] and nbrs[b.id] == []


class TestSehValidate:
    def setup_method(self):
        self.table = table_from({
            "a": np.array([1.0, 0.0]), "b": np.array([0.95, 0.3122]),
            "c": np.array([0.0, 1.0])})
        self.index = HppIndex(self.table)
        nbrs = {f: [g for g in self.table.fus if g != f] for f in self.table.fus}
        self.fei = build_fei_table(self.table, nbrs, {"a": 5.0, "b": 5.0, "c": 5.0})

    def test_singleton_with_high_fei_and_volume(self):
        top = max(self.fei.normalized, key=self.fei.normalized.get)
        out = seh_validate([top], self.fei, self.index, {top: 100.0},
                           fei_threshold=0.6, hpp_threshold=0.5, volume_floor=50.0)
        assert out.ok, out.violations

    def test_low_pair_hpp_reported(self):
        out = seh_validate(["a", "c"], self.fei, self.index,
                           {"a": 100.0, "c": 100.0},
                           fei_threshold=0.0, hpp_threshold=0.5, volume_floor=10.0)
        assert not out.ok
        assert any(v.startswith("pair-threshold") for v in out.violations)

    def test_uncovered_pair_reported(self):
        out = seh_validate(["a", "zzz"], self.fei, self.index, {"a": 100.0},
                           fei_threshold=0.0, hpp_threshold=0.1, volume_floor=0.0)
        assert any(v.startswith("uncovered-pair") for v in out.violations)

    def test_volume_floor_reported(self):
        top = max(self.fei.normalized, key=self.fei.normalized.get)
        out = seh_validate([top], self.fei, self.index, {top: 10.0},
                           fei_threshold=0.6, hpp_threshold=0.5, volume_floor=50.0)
        assert any(v.startswith("volume-floor") for v in out.violations)

    def test_fei_threshold_strict(self):
        out = seh_validate(["a"], self.fei, self.index, {"a": 100.0},
                           fei_threshold=1.0, hpp_threshold=0.0, volume_floor=0.0)
        assert any(v.startswith("fei-threshold") for v in out.violations)
