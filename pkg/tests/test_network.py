import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scdn.errors import ValidationError
from scdn.network import (ATTR_DIM, AoiStats, BarrierInfo, FlowUnit, GeoPoint,
                          OrderRecord, Session, SessionFlags, TrajectoryEvent,
                          build_amhen, build_extended_network, build_fu_sequences,
                          compute_node_attributes, filter_sc_sessions, make_fu_id,
                          parse_fu_id, partition_regions, segment_sessions,
                          standardize_per_region)

SC = "weekday-peak"
MIN = 60.0


def ev(courier, order, fu, action, t):
    return TrajectoryEvent(courier_id=courier, order_id=order, fu=fu,
                           action=action, timestamp=t)


def event_chain(gaps_minutes, courier="c1"):
    t = 0.0
    events = [ev(courier, "o0", "f0", "pickup", t)]
    for k, gap in enumerate(gaps_minutes, 1):
        t += gap * MIN
        events.append(ev(courier, f"o{k}", f"f{k}", "pickup", t))
    return events


class TestSegmentSessions:
    def test_gap_pattern_splits(self):
        sessions = segment_sessions(event_chain([10, 15, 45]))
        assert [len(s.events) for s in sessions] == [3, 1]

    def test_single_event(self):
        sessions = segment_sessions(event_chain([]))
        assert [len(s.events) for s in sessions] == [1]

    def test_gap_exactly_at_threshold_does_not_split(self):
        sessions = segment_sessions(event_chain([30.0]))
        assert [len(s.events) for s in sessions] == [2]

    def test_unsorted_rejected(self):
        events = event_chain([10])[::-1]
        with pytest.raises(ValidationError):
            segment_sessions(events)

    def test_mixed_couriers_rejected(self):
        events = event_chain([10]) + [ev("c2", "o9", "f9", "pickup", 5000.0)]
        with pytest.raises(ValidationError):
            segment_sessions(sorted(events, key=lambda e: e.timestamp))

    @given(st.lists(st.floats(min_value=0.1, max_value=120.0), max_size=25))
    @settings(max_examples=50, deadline=None)
    def test_sessions_partition_the_stream(self, gaps):
        events = event_chain(gaps)
        sessions = segment_sessions(events)
        rebuilt = [e for s in sessions for e in s.events]
        assert rebuilt == events
        for s in sessions:
            assert s.max_gap() <= 30 * MIN


class TestFilterScSessions:
    def session(self, courier="c1"):
        return Session(courier_id=courier, events=event_chain([5, 5], courier))

    def test_top_couriers_excluded(self):
        kept = filter_sc_sessions([self.session()], {"c1": 0.03})
        assert kept == []

    def test_overtime_dropped(self):
        s = self.session()
        s.flags = SessionFlags(overtime=True)
        assert filter_sc_sessions([s], {"c1": 0.2}) == []

    def test_in_band_clean_kept(self):
        s = self.session()
        assert filter_sc_sessions([s], {"c1": 0.2}) == [s]

    def test_band_boundaries(self):
        assert filter_sc_sessions([self.session()], {"c1": 0.05}) == []
        kept = filter_sc_sessions([self.session()], {"c1": 0.35})
        assert len(kept) == 1

    def test_long_gap_dropped(self):
        s = Session(courier_id="c1", events=event_chain([40]))
        assert filter_sc_sessions([s], {"c1": 0.2}) == []

    def test_flags_override_sequence(self):
        sessions = [self.session(), self.session()]
        flags = [SessionFlags(), SessionFlags(speeding=True)]
        kept = filter_sc_sessions(sessions, {"c1": 0.2}, flags=flags)
        assert kept == [sessions[0]]


class TestFuSequences:
    def test_reference_session_shape(self):
        # three orders: pickups DE, FC, FB; deliveries DE, FB, FC
        events = [
            ev("c", "o1", "DE", "pickup", 0), ev("c", "o2", "FC", "pickup", 60),
            ev("c", "o3", "FB", "pickup", 120), ev("c", "o1", "DE", "delivery", 180),
            ev("c", "o3", "FB", "delivery", 240), ev("c", "o2", "FC", "delivery", 300),
        ]
        pickup, delivery = build_fu_sequences(Session("c", events))
        assert pickup == ["DE", "FC", "FB"]
        assert delivery == ["DE", "FB", "FC"]

    def test_single_order(self):
        events = [ev("c", "o1", "X", "pickup", 0), ev("c", "o1", "X", "delivery", 60)]
        assert build_fu_sequences(Session("c", events)) == (["X"], ["X"])

    def test_consecutive_duplicates_collapse(self):
        events = [ev("c", "o1", "X", "pickup", 0), ev("c", "o2", "X", "pickup", 30),
                  ev("c", "o1", "X", "delivery", 60), ev("c", "o2", "X", "delivery", 90)]
        assert build_fu_sequences(Session("c", events)) == (["X"], ["X"])


def attrs_for(fus, dim=3, seed=0):
    rng = np.random.default_rng(seed)
    return {fu: rng.normal(size=dim) for fu in fus}


class TestBuildAmhen:
    def test_reference_session_edges(self):
        seqs = [(["DE", "FC", "FB"], ["DE", "FB", "FC"])]
        g = build_amhen(seqs, attrs_for(["DE", "FB", "FC"]))
        idx = g.index
        pickup = {tuple(sorted(p)) for p in g.edges["pickup"]}
        delivery = {tuple(sorted(p)) for p in g.edges["delivery"]}
        pair = lambda a, b: tuple(sorted((idx[a], idx[b])))
        assert pickup == {pair("DE", "FC"), pair("FC", "FB")}
        assert delivery == {pair("DE", "FB"), pair("FB", "FC")}

    def test_counts_accumulate(self):
        seqs = [(["a", "b"], [])] * 3
        g = build_amhen(seqs, attrs_for(["a", "b"]))
        assert list(g.edges["pickup"].values()) == [3]
        assert g.edges["delivery"] == {}

    def test_empty(self):
        g = build_amhen([], {})
        assert g.n_nodes == 0

    def test_dimension_mismatch_rejected(self):
        attrs = {"a": np.zeros(3), "b": np.zeros(4)}
        with pytest.raises(ValidationError):
            build_amhen([(["a", "b"], [])], attrs)

    def test_missing_attribute_rejected(self):
        with pytest.raises(ValidationError):
            build_amhen([(["a", "b"], [])], {"a": np.zeros(3)})

    def test_rebuild_is_bit_identical(self):
        seqs = [(["a", "b", "c"], ["c", "a"]), (["b", "c"], ["a", "b", "c"])]
        attrs = attrs_for(["a", "b", "c"])
        g1 = build_amhen(seqs, attrs)
        g2 = build_amhen(seqs, attrs)
        assert g1.fus == g2.fus
        assert np.array_equal(g1.attrs, g2.attrs)
        assert g1.edges == g2.edges
        assert np.array_equal(g1.regions, g2.regions)

    def test_edge_endpoint_closure(self):
        seqs = [(["a", "b", "c", "a"], ["b", "c"])]
        g = build_amhen(seqs, attrs_for(["a", "b", "c"]))
        g.validate()
        for edges in g.edges.values():
            for i, j in edges:
                assert 0 <= i < j < g.n_nodes


class TestRegions:
    def test_two_clusters(self):
        seqs = [(["a", "b", "c"], []), (["x", "y", "z"], [])]
        g = build_amhen(seqs, attrs_for(["a", "b", "c", "x", "y", "z"]))
        assignment = partition_regions(g)
        assert len(set(assignment.values())) == 2
        assert assignment["a"] == assignment["b"] == assignment["c"]
        assert assignment["x"] == assignment["y"] == assignment["z"]

    def test_fully_connected(self):
        seqs = [(["a", "b"], ["b", "c"])]
        g = build_amhen(seqs, attrs_for(["a", "b", "c"]))
        assert len(set(partition_regions(g).values())) == 1

    def test_isolated_node_own_region(self):
        # d appears only as a length-1 sequence: node without edges
        seqs = [(["a", "b"], []), (["d"], [])]
        g = build_amhen(seqs, attrs_for(["a", "b", "d"]))
        assignment = partition_regions(g)
        assert assignment["d"] not in (assignment["a"],)
        counts = {}
        for region in assignment.values():
            counts[region] = counts.get(region, 0) + 1
        assert sum(counts.values()) == g.n_nodes  # every node in exactly one region


class TestExtendedNetwork:
    def centroids(self):
        return {"P1": GeoPoint(31.0, 121.0), "P2": GeoPoint(31.1, 121.0),
                "D1": GeoPoint(31.05, 121.0),
                "D2": GeoPoint(31.05 + 500 / 111_320, 121.0),
                "D3": GeoPoint(31.05 + 10 / 111_320, 121.0)}

    def test_same_pickup_close_deliveries_adjacent(self):
        fus = [FlowUnit("P1", "D1", SC), FlowUnit("P1", "D2", SC)]
        net = build_extended_network(fus, self.centroids())
        assert net.adjacency[fus[0].id] == [fus[1].id]
        assert net.adjacency[fus[1].id] == [fus[0].id]

    def test_different_pickup_never_adjacent(self):
        fus = [FlowUnit("P1", "D1", SC), FlowUnit("P2", "D3", SC)]
        net = build_extended_network(fus, self.centroids())
        assert net.adjacency[fus[0].id] == []
        assert net.adjacency[fus[1].id] == []

    def test_fallback_to_shared_pickup(self):
        far = {"P1": GeoPoint(31.0, 121.0), "Da": GeoPoint(31.05, 121.0),
               "Db": GeoPoint(31.09, 121.0), "Dc": GeoPoint(31.2, 121.0)}
        fus = [FlowUnit("P1", "Da", SC), FlowUnit("P1", "Db", SC),
               FlowUnit("P1", "Dc", SC)]
        net = build_extended_network(fus, far)
        # Dc is over 1km from both others: fallback links it to both
        assert net.adjacency[fus[2].id] == sorted([fus[0].id, fus[1].id])

    def test_unknown_centroid_excluded_with_warning(self):
        fus = [FlowUnit("P1", "D1", SC), FlowUnit("P1", "NOPE", SC)]
        net = build_extended_network(fus, self.centroids())
        assert net.excluded == [fus[1].id]
        assert fus[1].id not in net.adjacency

    def test_distance_rule_symmetric(self):
        rng = np.random.default_rng(3)
        cent = {f"D{k}": GeoPoint(31.0 + float(rng.uniform(0, 0.02)), 121.0)
                for k in range(12)}
        cent["P"] = GeoPoint(31.0, 121.0)
        fus = [FlowUnit("P", f"D{k}", SC) for k in range(12)]
        net = build_extended_network(fus, cent)
        for fu in fus:
            for other in net.adjacency[fu.id]:
                near = build_extended_network(fus, cent).adjacency[other]
                if fu.id not in near:
                    # asymmetry only allowed through the fallback rule
                    assert net.adjacency[other] == sorted(
                        f.id for f in fus if f.id != other)


class TestNodeAttributes:
    def history(self):
        recs = []
        for k in range(30):
            recs.append(OrderRecord(
                order_id=f"o{k}", fu=make_fu_id("P", "D", SC), pickup_aoi="P",
                delivery_aoi="D", scenario=SC, placed_at=k * 1000.0,
                pickup_at=k * 1000.0 + 300, delivered_at=k * 1000.0 + 900,
                delivery_distance_m=1500.0))
        return recs

    def stats(self):
        return AoiStats(centroids={"P": GeoPoint(31.0, 121.0),
                                   "D": GeoPoint(31.01, 121.0)},
                        pickup_pref={"P": 0.4}, delivery_pref={"D": 0.6},
                        barriers={})

    def test_volume_per_day(self):
        table = compute_node_attributes(self.history(), self.stats(), SC,
                                        window_days=30.0)
        vec = table.vectors[make_fu_id("P", "D", SC)]
        assert vec[0] == pytest.approx(1.0)  # 30 orders over 30 days
        assert vec.shape == (ATTR_DIM,)
        assert np.isfinite(vec).all()

    def test_missing_barrier_imputed_and_flagged(self):
        fu = make_fu_id("P", "D", SC)
        table = compute_node_attributes(self.history(), self.stats(), SC)
        assert fu in table.flagged  # no barrier data anywhere -> imputed 0
        assert table.vectors[fu][7] == 0.0

    def test_constant_attribute_standardizes_to_zero(self):
        attrs = np.array([[2.0, 1.0], [2.0, 3.0], [2.0, 5.0]])
        z = standardize_per_region(attrs, np.zeros(3, dtype=np.int64))
        assert np.allclose(z[:, 0], 0.0)
        assert z[:, 1].min() < 0 < z[:, 1].max()

    def test_empty_region_zero_vector_flagged(self):
        fu = make_fu_id("P", "D", SC)
        table = compute_node_attributes([], self.stats(), SC, fus=[fu])
        assert fu in table.flagged
        vec = table.vectors[fu]
        # statistics with no data anywhere impute to zero
        assert vec[0] == 0.0 and np.isfinite(vec).all()

    def test_unknown_scenario_rejected(self):
        with pytest.raises(ValidationError):
            compute_node_attributes([], self.stats(), "lunch-rush")


def test_fu_id_round_trip():
    fu = make_fu_id("A01", "B02", SC)
    assert parse_fu_id(fu) == ("A01", "B02", SC)
    assert FlowUnit.from_id(fu).id == fu
    with pytest.raises(ValidationError):
        parse_fu_id("garbage")


def test_geopoint_range_checked():
    with pytest.raises(ValidationError):
        GeoPoint(91.0, 0.0)
