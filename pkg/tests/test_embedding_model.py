import numpy as np
import pytest

from scdn.embedding.model import (GraphContext, ModelParams, TrainConfig, forward)
from scdn.network import build_amhen, make_fu_id
from scdn.oracles import gradient_check

SC = "weekday-peak"


def toy_graph(n=4, attr_dim=5, seed=0, edges=None):
    rng = np.random.default_rng(seed)
    fus = [make_fu_id(f"P{i}", f"D{i}", SC) for i in range(n)]
    attrs = {fu: rng.normal(size=attr_dim) for fu in fus}
    if edges is None:
        edges = [([fus[0], fus[1], fus[2]], [fus[1], fus[3]])]
    else:
        edges = [([fus[i] for i in p], [fus[i] for i in d]) for p, d in edges]
    return build_amhen(edges, attrs), fus


def small_config(**kw):
    base = dict(embedding_dim=8, edge_embedding_dim=4, attention_dim=3,
                aggregation_depth=2)
    base.update(kw)
    return TrainConfig(**base)


def test_output_dimensions_match_config():
    amhen, _ = toy_graph()
    ctx = GraphContext.from_amhen(amhen)
    cfg = TrainConfig(embedding_dim=200, edge_embedding_dim=20, attention_dim=20)
    params = ModelParams.init(np.random.default_rng(0), ctx.attrs.shape[1], cfg)
    state = forward(params, ctx)
    assert state.vectors["pickup"].shape == (amhen.n_nodes, 200)
    assert state.vectors["delivery"].shape == (amhen.n_nodes, 200)
    assert state.edge["pickup"].shape == (amhen.n_nodes, 20)


def test_zero_alpha_beta_reduces_to_base_map():
    amhen, _ = toy_graph()
    ctx = GraphContext.from_amhen(amhen)
    cfg = small_config(alpha_pickup=0.0, alpha_delivery=0.0,
                       beta_pickup=0.0, beta_delivery=0.0)
    params = ModelParams.init(np.random.default_rng(1), ctx.attrs.shape[1], cfg)
    state = forward(params, ctx)
    base = ctx.attrs @ params.arrays["base_w"].T + params.arrays["base_b"]
    for t in ("pickup", "delivery"):
        assert np.allclose(state.vectors[t], base)


def test_single_neighbor_depth_one_aggregation():
    # path a-b on pickup edges: at depth 1 each node aggregates the other's
    # initial edge embedding exactly
    amhen, fus = toy_graph(n=2, edges=[([0, 1], [])])
    ctx = GraphContext.from_amhen(amhen)
    cfg = small_config(aggregation_depth=1)
    params = ModelParams.init(np.random.default_rng(2), ctx.attrs.shape[1], cfg)
    state = forward(params, ctx)
    u0 = ctx.attrs @ params.arrays["edge_w_pickup"].T + params.arrays["edge_b_pickup"]
    ia, ib = amhen.index[fus[0]], amhen.index[fus[1]]
    assert np.allclose(state.edge["pickup"][ia], u0[ib])
    assert np.allclose(state.edge["pickup"][ib], u0[ia])


def test_neighborless_node_aggregates_itself():
    amhen, fus = toy_graph(n=3, edges=[([0, 1], []), ([2], [])])
    ctx = GraphContext.from_amhen(amhen)
    cfg = small_config(aggregation_depth=3)
    params = ModelParams.init(np.random.default_rng(3), ctx.attrs.shape[1], cfg)
    state = forward(params, ctx)
    # node 2 has no edges at all: every level keeps its own embedding
    for t in ("pickup", "delivery"):
        u0 = ctx.attrs @ params.arrays[f"edge_w_{t}"].T + params.arrays[f"edge_b_{t}"]
        i = amhen.index[fus[2]]
        assert np.allclose(state.edge[t][i], u0[i])


def test_attention_rows_are_probability_vectors():
    amhen, _ = toy_graph(n=6, seed=5,
                         edges=[([0, 1, 2], [3, 4]), ([2, 3], [0, 5])])
    ctx = GraphContext.from_amhen(amhen)
    params = ModelParams.init(np.random.default_rng(4), ctx.attrs.shape[1],
                              small_config())
    state = forward(params, ctx)
    for t in ("pickup", "delivery"):
        a = state.attention[t]
        assert (a >= 0).all()
        assert np.allclose(a.sum(axis=1), 1.0)


def test_mean_aggregation_matches_manual_computation():
    # 4-node toy: pickup edges a-b, b-c, c-d; two levels of mean aggregation
    amhen, fus = toy_graph(n=4, edges=[([0, 1, 2, 3], [])])
    ctx = GraphContext.from_amhen(amhen)
    cfg = small_config(aggregation_depth=2)
    params = ModelParams.init(np.random.default_rng(6), ctx.attrs.shape[1], cfg)
    state = forward(params, ctx)

    idx = [amhen.index[f] for f in fus]
    u0 = ctx.attrs @ params.arrays["edge_w_pickup"].T + params.arrays["edge_b_pickup"]
    nbrs = {0: [1], 1: [0, 2], 2: [1, 3], 3: [2]}
    level1 = np.stack([np.mean(u0[[idx[j] for j in nbrs[i]]], axis=0)
                       for i in range(4)])
    level2 = np.stack([np.mean(level1[[j for j in nbrs[i]]], axis=0)
                       for i in range(4)])
    assert np.allclose(state.edge["pickup"][idx], level2)


def test_gradients_match_finite_differences():
    result = gradient_check(seed=3)
    assert result.passed, result.detail
    assert result.seconds < 10.0


def test_flatten_round_trip():
    amhen, _ = toy_graph()
    ctx = GraphContext.from_amhen(amhen)
    params = ModelParams.init(np.random.default_rng(7), ctx.attrs.shape[1],
                              small_config())
    theta = params.flatten()
    state_before = forward(params, ctx).vectors["pickup"].copy()
    params.unflatten(theta * 1.0)
    assert np.array_equal(forward(params, ctx).vectors["pickup"], state_before)
    with pytest.raises(ValueError):
        params.unflatten(theta[:-1])
