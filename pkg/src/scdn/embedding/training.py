"""Loss, optimizer, and the training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergenceError, ValidationError
from .evaluation import auc_score
from .model import (TYPES, ForwardState, GraphContext, ModelParams, TrainConfig,
                    backward, cosine_backward, cosine_pairs, forward)
from .sampling import extract_positive_pairs, generate_walks, sample_negatives
from .store import PROVENANCE_LEARNED, EmbeddingTable

logger = logging.getLogger(__name__)

_LOGSIGMOID_SCALE = 5.0  # sharpens cosine scores fed through the sigmoid


@dataclass
class TrainingPairSets:
    """Positive/negative index pairs per edge type plus loss weights."""

    positives: dict[str, np.ndarray]
    negatives: dict[str, np.ndarray]
    gamma_pos: dict[str, float]
    gamma_neg: dict[str, float]
    margins: dict[str, float]

    def validate(self, regions: np.ndarray | None = None) -> None:
        for t in TYPES:
            pos = {tuple(p) for p in self.positives[t].tolist()}
            neg = {tuple(p) for p in self.negatives[t].tolist()}
            if pos & neg:
                raise ValidationError(f"{t}: positive and negative sets overlap")
            if regions is not None:
                for i, j in pos | neg:
                    if regions[i] != regions[j]:
                        raise ValidationError(f"{t}: pair ({i},{j}) crosses regions")

    @staticmethod
    def from_config(cfg: TrainConfig, positives, negatives) -> "TrainingPairSets":
        return TrainingPairSets(
            positives=positives, negatives=negatives,
            gamma_pos={t: cfg.gamma(t, True) for t in TYPES},
            gamma_neg={t: cfg.gamma(t, False) for t in TYPES},
            margins={t: cfg.margin(t) for t in TYPES},
        )


def _pair_terms(cos: np.ndarray, positive: bool, margin: float, loss_mode: str,
                ) -> tuple[np.ndarray, np.ndarray]:
    """Per-pair loss terms and d(term)/d(cos)."""
    if loss_mode == "margin":
        if positive:
            return 1.0 - cos, -np.ones_like(cos)
        hinge = cos - margin
        active = hinge > 0
        return np.where(active, hinge, 0.0), np.where(active, 1.0, 0.0)
    # log-sigmoid baseline: -log sigmoid(+/- scale * cos)
    k = _LOGSIGMOID_SCALE
    sign = 1.0 if positive else -1.0
    x = sign * k * cos
    return np.logaddexp(0.0, -x), -sign * k / (1.0 + np.exp(x))


def loss_and_grad(params: ModelParams, ctx: GraphContext, pairs: TrainingPairSets,
                  loss_mode: str = "margin", want_grad: bool = True,
                  ) -> tuple[float, dict[str, np.ndarray] | None]:
    state = forward(params, ctx)
    total = 0.0
    d_vectors = {t: np.zeros_like(state.vectors[t]) for t in TYPES}
    for t in TYPES:
        for positive, pair_array, gamma in (
                (True, pairs.positives[t], pairs.gamma_pos[t]),
                (False, pairs.negatives[t], pairs.gamma_neg[t])):
            if pair_array.size == 0:
                continue
            cos, cache = cosine_pairs(state.vectors[t], pair_array)
            terms, d_cos = _pair_terms(cos, positive, pairs.margins[t], loss_mode)
            weight = gamma / len(terms)
            total += weight * terms.sum()
            if want_grad:
                cosine_backward(weight * d_cos, cache, d_vectors[t])
    grads = backward(params, ctx, state, d_vectors) if want_grad else None
    return total, grads


def eq6_loss(params: ModelParams, ctx: GraphContext, pairs: TrainingPairSets) -> float:
    """The margin ranking objective evaluated exactly on the given sets."""
    value, _ = loss_and_grad(params, ctx, pairs, loss_mode="margin", want_grad=False)
    return value


class Adam:
    def __init__(self, params: ModelParams, lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = params.zeros_like()
        self.v = params.zeros_like()
        self.t = 0

    def step(self, params: ModelParams, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        correction = np.sqrt(1.0 - b2 ** self.t) / (1.0 - b1 ** self.t)
        for key, g in grads.items():
            self.m[key] = b1 * self.m[key] + (1 - b1) * g
            self.v[key] = b2 * self.v[key] + (1 - b2) * g * g
            params.arrays[key] -= self.lr * correction * self.m[key] \
                / (np.sqrt(self.v[key]) + self.eps)


@dataclass
class TrainResult:
    table: EmbeddingTable
    params: ModelParams
    ctx: GraphContext
    epoch_losses: list[float] = field(default_factory=list)
    val_auc: list[float] = field(default_factory=list)
    best_epoch: int = 0
    pair_counts: dict[str, int] = field(default_factory=dict)


def _validation_auc(params: ModelParams, ctx: GraphContext,
                    val_pos: dict[str, np.ndarray], val_neg: dict[str, np.ndarray]) -> float:
    state = forward(params, ctx)
    scores = []
    for t in TYPES:
        if val_pos[t].size == 0 or val_neg[t].size == 0:
            continue
        pos, _ = cosine_pairs(state.vectors[t], val_pos[t])
        neg, _ = cosine_pairs(state.vectors[t], val_neg[t])
        scores.append(auc_score(pos, neg))
    return float(np.mean(scores)) if scores else 0.5


def build_pair_sets(amhen, cfg: TrainConfig, rng: np.random.Generator):
    """Walk the graph and assemble train/validation pair sets per type."""
    train_pos, train_neg, val_pos, val_neg = {}, {}, {}, {}
    for t in TYPES:
        walks = generate_walks(amhen, t, cfg.walk_length, cfg.walks_per_node, rng)
        positives = extract_positive_pairs(walks, cfg.window_size)
        order = rng.permutation(len(positives))
        positives = positives[order]
        n_val = max(1, int(len(positives) * cfg.validation_fraction)) if len(positives) else 0
        val_pos[t] = positives[:n_val]
        train_pos[t] = positives[n_val:]
        want = cfg.negatives_per_positive * max(1, len(train_pos[t])) + max(1, n_val)
        negatives = sample_negatives(amhen, amhen.regions, positives, want, rng,
                                     edge_type=t, hop_floor=cfg.negative_hop_floor,
                                     mode=cfg.negative_mode)
        n_val_neg = min(max(1, n_val), len(negatives))
        val_neg[t] = negatives[:n_val_neg]
        train_neg[t] = negatives[n_val_neg:]
        if train_neg[t].size == 0:
            train_neg[t] = negatives  # tiny graphs: reuse rather than starve
    return train_pos, train_neg, val_pos, val_neg


def train(amhen, cfg: TrainConfig, rng_seed: int,
          validation: tuple[dict[str, np.ndarray], dict[str, np.ndarray]] | None = None,
          ) -> TrainResult:
    """Mini-batch Adam on the ranking objective with one-epoch-patience
    early stopping on validation AUC; deterministic under the seed.

    ``validation`` replaces the internal held-out split with fixed
    (positive, negative) index-pair sets per type, which keeps competing
    training configurations comparable on one yardstick.
    """
    cfg.validate()
    rng = np.random.default_rng(rng_seed)
    ctx = GraphContext.from_amhen(amhen)
    params = ModelParams.init(rng, ctx.attrs.shape[1], cfg)
    train_pos, train_neg, val_pos, val_neg = build_pair_sets(amhen, cfg, rng)
    if validation is not None:
        ext_pos, ext_neg = validation
        for t in TYPES:  # reclaim the internal split for training
            train_pos[t] = np.concatenate([train_pos[t], val_pos[t]]) \
                if val_pos[t].size else train_pos[t]
        val_pos = {t: np.asarray(ext_pos[t], dtype=np.int64) for t in TYPES}
        val_neg = {t: np.asarray(ext_neg[t], dtype=np.int64) for t in TYPES}

    result = TrainResult(table=None, params=params, ctx=ctx,
                         pair_counts={f"pos_{t}": len(train_pos[t]) for t in TYPES}
                         | {f"neg_{t}": len(train_neg[t]) for t in TYPES})
    optimizer = Adam(params, cfg.learning_rate)
    best_auc = -np.inf
    best_params = params.copy()
    stale = 0

    for epoch in range(cfg.max_epochs):
        schedule: list[tuple[str, np.ndarray]] = []
        neg_cursor = {t: 0 for t in TYPES}
        neg_order = {t: rng.permutation(len(train_neg[t])) if len(train_neg[t]) else
                     np.zeros(0, dtype=np.int64) for t in TYPES}
        for t in TYPES:
            order = rng.permutation(len(train_pos[t]))
            for lo in range(0, len(order), cfg.batch_size):
                schedule.append((t, order[lo:lo + cfg.batch_size]))
        rng.shuffle(schedule)

        epoch_loss = 0.0
        for t, batch_idx in schedule:
            pos_batch = train_pos[t][batch_idx]
            n_neg = min(cfg.negatives_per_positive * len(batch_idx), len(train_neg[t]))
            neg_batch = np.zeros((0, 2), dtype=np.int64)
            if n_neg:
                take = neg_order[t][neg_cursor[t]:neg_cursor[t] + n_neg]
                if len(take) < n_neg:  # wrap around the shuffled pool
                    take = np.concatenate([take, neg_order[t][:n_neg - len(take)]])
                neg_cursor[t] = (neg_cursor[t] + n_neg) % max(1, len(neg_order[t]))
                neg_batch = train_neg[t][take]
            batch = TrainingPairSets.from_config(cfg,
                                                 positives={u: pos_batch if u == t else
                                                            np.zeros((0, 2), dtype=np.int64)
                                                            for u in TYPES},
                                                 negatives={u: neg_batch if u == t else
                                                            np.zeros((0, 2), dtype=np.int64)
                                                            for u in TYPES})
            value, grads = loss_and_grad(params, ctx, batch, loss_mode=cfg.loss_mode)
            if not np.isfinite(value):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}: {value!r}; "
                    f"lr={cfg.learning_rate}, batch type={t}, size={len(batch_idx)}")
            optimizer.step(params, grads)
            epoch_loss += value
        result.epoch_losses.append(epoch_loss / max(1, len(schedule)))

        auc = _validation_auc(params, ctx, val_pos, val_neg)
        result.val_auc.append(auc)
        if auc > best_auc + 1e-9:
            best_auc = auc
            best_params = params.copy()
            result.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience_epochs:
                logger.info("early stop at epoch %d (best AUC %.4f)", epoch, best_auc)
                break

    result.params = best_params
    state = forward(best_params, ctx)
    overall = 0.5 * (state.vectors["pickup"] + state.vectors["delivery"])
    result.table = EmbeddingTable(
        fus=list(amhen.fus),
        overall=overall,
        pickup=state.vectors["pickup"].copy(),
        delivery=state.vectors["delivery"].copy(),
        provenance=np.full(amhen.n_nodes, PROVENANCE_LEARNED, dtype=np.uint8),
    )
    return result
