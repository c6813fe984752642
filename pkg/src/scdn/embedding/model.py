"""Model parameters, forward pass, and hand-written gradients.

Per edge type the node embedding is

    v[t] = base(x) + alpha[t] * (attention-mixed edge embedding) @ proj[t]
           + beta[t] * attr(x)

where the edge embedding starts as an affine map of the attributes and is
mean-aggregated over same-type neighbors for ``depth`` levels; a softmax
attention over the two per-type edge embeddings produces the mix.  The
attribute term carries its own affine map into embedding space (the
projection shapes make the initial edge map unusable there).

Everything is dense numpy float64; graphs at desk scale are small enough
to run the forward pass over all nodes at once, which keeps the backward
pass a handful of matrix products.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

TYPES = ("pickup", "delivery")


@dataclass
class TrainConfig:
    """Hyperparameters; defaults follow the reference configuration."""

    embedding_dim: int = 200          # d
    edge_embedding_dim: int = 20      # s
    attention_dim: int = 20
    aggregation_depth: int = 2
    walk_length: int = 10
    walks_per_node: int = 20
    window_size: int = 3
    margin_pickup: float = 0.3
    margin_delivery: float = 0.3
    learning_rate: float = 0.001
    batch_size: int = 512
    max_epochs: int = 40
    patience_epochs: int = 1
    negatives_per_positive: int = 5
    negative_hop_floor: int = 3
    negative_mode: str = "regional"   # "regional" | "random"
    loss_mode: str = "margin"         # "margin" | "logsigmoid"
    validation_fraction: float = 0.1
    alpha_pickup: float = 1.0
    alpha_delivery: float = 1.0
    beta_pickup: float = 1.0
    beta_delivery: float = 1.0
    gamma_pos_pickup: float = 1.0
    gamma_pos_delivery: float = 1.0
    gamma_neg_pickup: float = 1.0
    gamma_neg_delivery: float = 1.0

    def margin(self, edge_type: str) -> float:
        return self.margin_pickup if edge_type == "pickup" else self.margin_delivery

    def alpha(self, edge_type: str) -> float:
        return self.alpha_pickup if edge_type == "pickup" else self.alpha_delivery

    def beta(self, edge_type: str) -> float:
        return self.beta_pickup if edge_type == "pickup" else self.beta_delivery

    def gamma(self, edge_type: str, positive: bool) -> float:
        key = f"gamma_{'pos' if positive else 'neg'}_{edge_type}"
        return getattr(self, key)

    def validate(self) -> None:
        if self.embedding_dim < 1 or self.edge_embedding_dim < 1 or self.attention_dim < 1:
            raise ValueError("dimensions must be positive")
        if self.walk_length < 2:
            raise ValueError("walk_length must be at least 2")
        if self.window_size < 1:
            raise ValueError("window_size must be at least 1")
        if self.negative_hop_floor <= 2:
            raise ValueError("negative_hop_floor must exceed 2")
        if self.negative_mode not in ("regional", "random"):
            raise ValueError(f"unknown negative_mode {self.negative_mode!r}")
        if self.loss_mode not in ("margin", "logsigmoid"):
            raise ValueError(f"unknown loss_mode {self.loss_mode!r}")
        if not (0.0 < self.validation_fraction < 1.0):
            raise ValueError("validation_fraction must lie in (0, 1)")


# parameter arrays in flattening order
_PARAM_KEYS = (
    "base_w", "base_b", "attr_w", "attr_b",
    "edge_w_pickup", "edge_b_pickup", "edge_w_delivery", "edge_b_delivery",
    "attn_vec_pickup", "attn_vec_delivery",
    "attn_mat_pickup", "attn_mat_delivery",
    "proj_pickup", "proj_delivery",
)


@dataclass
class ModelParams:
    arrays: dict[str, np.ndarray]
    alpha: dict[str, float]
    beta: dict[str, float]
    depth: int

    @staticmethod
    def init(rng: np.random.Generator, attr_dim: int, cfg: TrainConfig) -> "ModelParams":
        d, s, da = cfg.embedding_dim, cfg.edge_embedding_dim, cfg.attention_dim

        def dense(rows: int, cols: int) -> np.ndarray:
            return rng.normal(0.0, 1.0 / np.sqrt(cols), size=(rows, cols))

        arrays = {
            "base_w": dense(d, attr_dim), "base_b": np.zeros(d),
            "attr_w": dense(d, attr_dim), "attr_b": np.zeros(d),
        }
        for t in TYPES:
            arrays[f"edge_w_{t}"] = dense(s, attr_dim)
            arrays[f"edge_b_{t}"] = np.zeros(s)
            arrays[f"attn_vec_{t}"] = rng.normal(0.0, 1.0 / np.sqrt(da), size=da)
            arrays[f"attn_mat_{t}"] = dense(da, s)
            arrays[f"proj_{t}"] = dense(s, d)
        return ModelParams(
            arrays=arrays,
            alpha={t: cfg.alpha(t) for t in TYPES},
            beta={t: cfg.beta(t) for t in TYPES},
            depth=cfg.aggregation_depth,
        )

    def copy(self) -> "ModelParams":
        return ModelParams(arrays={k: v.copy() for k, v in self.arrays.items()},
                           alpha=dict(self.alpha), beta=dict(self.beta), depth=self.depth)

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.arrays.items()}

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.arrays[k].ravel() for k in _PARAM_KEYS])

    def unflatten(self, vec: np.ndarray) -> None:
        offset = 0
        for k in _PARAM_KEYS:
            size = self.arrays[k].size
            self.arrays[k] = vec[offset:offset + size].reshape(self.arrays[k].shape).copy()
            offset += size
        if offset != vec.size:
            raise ValueError("flattened parameter size mismatch")

    def finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.arrays.values())


def flatten_grads(grads: Mapping[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([grads[k].ravel() for k in _PARAM_KEYS])


@dataclass
class GraphContext:
    """Dense attribute matrix plus per-type mean-aggregation operators."""

    attrs: np.ndarray
    aggregators: dict[str, sp.csr_matrix]
    regions: np.ndarray

    @staticmethod
    def from_amhen(amhen) -> "GraphContext":
        n = amhen.n_nodes
        aggregators = {}
        for t in TYPES:
            rows, cols, vals = [], [], []
            nbrs = amhen.neighbor_lists(t)
            for i, lst in enumerate(nbrs):
                if lst:
                    w = 1.0 / len(lst)
                    for j, _count in lst:
                        rows.append(i)
                        cols.append(j)
                        vals.append(w)
                else:
                    rows.append(i)   # neighborless: aggregate over itself
                    cols.append(i)
                    vals.append(1.0)
            aggregators[t] = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        return GraphContext(attrs=np.asarray(amhen.attrs, dtype=np.float64),
                            aggregators=aggregators,
                            regions=np.asarray(amhen.regions))

    @property
    def n_nodes(self) -> int:
        return self.attrs.shape[0]


@dataclass
class ForwardState:
    """Cached intermediates; everything backward() needs."""

    base: np.ndarray                      # N x d
    attr_term: np.ndarray                 # N x d
    edge0: dict[str, np.ndarray]          # N x s, pre-aggregation
    edge: dict[str, np.ndarray]           # N x s, after depth levels
    stack: np.ndarray                     # N x T x s
    tanh: dict[str, np.ndarray]           # N x T x da, per output type
    attention: dict[str, np.ndarray]      # N x T, softmax rows
    mix: dict[str, np.ndarray]            # N x s
    vectors: dict[str, np.ndarray]        # N x d


def forward(params: ModelParams, ctx: GraphContext) -> ForwardState:
    X = ctx.attrs
    base = X @ params.arrays["base_w"].T + params.arrays["base_b"]
    attr_term = X @ params.arrays["attr_w"].T + params.arrays["attr_b"]
    edge0, edge = {}, {}
    for t in TYPES:
        u = X @ params.arrays[f"edge_w_{t}"].T + params.arrays[f"edge_b_{t}"]
        edge0[t] = u
        for _ in range(params.depth):
            u = ctx.aggregators[t] @ u
        edge[t] = u
    stack = np.stack([edge[t] for t in TYPES], axis=1)

    tanh_act, attention, mix, vectors = {}, {}, {}, {}
    for t in TYPES:
        th = np.tanh(stack @ params.arrays[f"attn_mat_{t}"].T)       # N x T x da
        z = th @ params.arrays[f"attn_vec_{t}"]                      # N x T
        z = z - z.max(axis=1, keepdims=True)
        a = np.exp(z)
        a /= a.sum(axis=1, keepdims=True)
        e = np.einsum("nt,nts->ns", a, stack)
        tanh_act[t], attention[t], mix[t] = th, a, e
        vectors[t] = base + params.alpha[t] * (e @ params.arrays[f"proj_{t}"]) \
            + params.beta[t] * attr_term
    return ForwardState(base=base, attr_term=attr_term, edge0=edge0, edge=edge,
                        stack=stack, tanh=tanh_act, attention=attention,
                        mix=mix, vectors=vectors)


def backward(params: ModelParams, ctx: GraphContext, state: ForwardState,
             d_vectors: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss given dL/dv per type (N x d arrays)."""
    X = ctx.attrs
    grads = params.zeros_like()
    d_base = np.zeros_like(state.base)
    d_attr = np.zeros_like(state.attr_term)
    d_stack = np.zeros_like(state.stack)

    for t in TYPES:
        dv = d_vectors[t]
        d_base += dv
        d_attr += params.beta[t] * dv
        grads[f"proj_{t}"] += params.alpha[t] * state.mix[t].T @ dv
        de = params.alpha[t] * dv @ params.arrays[f"proj_{t}"].T     # N x s
        da = np.einsum("ns,nts->nt", de, state.stack)
        d_stack += state.attention[t][:, :, None] * de[:, None, :]
        a = state.attention[t]
        dz = a * (da - (a * da).sum(axis=1, keepdims=True))          # softmax
        grads[f"attn_vec_{t}"] += np.einsum("nt,nta->a", dz, state.tanh[t])
        dpre = dz[:, :, None] * params.arrays[f"attn_vec_{t}"][None, None, :]
        dpre *= 1.0 - state.tanh[t] ** 2
        grads[f"attn_mat_{t}"] += np.einsum("nta,nts->as", dpre, state.stack)
        d_stack += np.einsum("nta,as->nts", dpre, params.arrays[f"attn_mat_{t}"])

    for ti, t in enumerate(TYPES):
        du = d_stack[:, ti, :]
        op_t = ctx.aggregators[t].T
        for _ in range(params.depth):
            du = op_t @ du
        grads[f"edge_w_{t}"] += du.T @ X
        grads[f"edge_b_{t}"] += du.sum(axis=0)

    grads["base_w"] += d_base.T @ X
    grads["base_b"] += d_base.sum(axis=0)
    grads["attr_w"] += d_attr.T @ X
    grads["attr_b"] += d_attr.sum(axis=0)
    return grads


def cosine_pairs(vectors: np.ndarray, pairs: np.ndarray) -> tuple[np.ndarray, dict]:
    """Cosine similarity per (i, j) row of ``pairs`` with a zero-norm guard.

    Returns the similarities and a cache for :func:`cosine_backward`.
    """
    if pairs.size == 0:
        return np.zeros(0), {"pairs": pairs}
    vi = vectors[pairs[:, 0]]
    vj = vectors[pairs[:, 1]]
    ni = np.linalg.norm(vi, axis=1)
    nj = np.linalg.norm(vj, axis=1)
    ok = (ni > 0) & (nj > 0)
    if not ok.all():
        logger.warning("cosine guard: %d zero-norm embeddings treated as similarity 0",
                       int((~ok).sum()))
    denom = np.where(ok, ni * nj, 1.0)
    cos = np.where(ok, (vi * vj).sum(axis=1) / denom, 0.0)
    cache = {"pairs": pairs, "vi": vi, "vj": vj, "ni": ni, "nj": nj, "ok": ok, "cos": cos}
    return cos, cache


def cosine_backward(d_cos: np.ndarray, cache: dict, out: np.ndarray) -> None:
    """Accumulate d(loss)/d(vectors) into ``out`` given d(loss)/d(cos)."""
    pairs = cache["pairs"]
    if pairs.size == 0:
        return
    vi, vj = cache["vi"], cache["vj"]
    ni, nj = cache["ni"], cache["nj"]
    ok, cos = cache["ok"], cache["cos"]
    scale = np.where(ok, d_cos, 0.0)[:, None]
    ni_safe = np.where(ok, ni, 1.0)[:, None]
    nj_safe = np.where(ok, nj, 1.0)[:, None]
    d_vi = scale * (vj / (ni_safe * nj_safe) - cos[:, None] * vi / ni_safe ** 2)
    d_vj = scale * (vi / (ni_safe * nj_safe) - cos[:, None] * vj / nj_safe ** 2)
    np.add.at(out, pairs[:, 0], d_vi)
    np.add.at(out, pairs[:, 1], d_vj)
