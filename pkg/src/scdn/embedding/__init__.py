"""Flow-unit embedding model: attention over per-type edge embeddings,
margin ranking loss on walk-derived pairs, region-congregated negatives."""

from .model import ForwardState, GraphContext, ModelParams, TrainConfig, forward
from .sampling import extract_positive_pairs, generate_walks, sample_negatives
from .store import EmbeddingTable, estimate_cold_start
from .training import TrainingPairSets, eq6_loss, train
from .evaluation import link_prediction_eval

__all__ = [
    "ForwardState", "GraphContext", "ModelParams", "TrainConfig", "forward",
    "extract_positive_pairs", "generate_walks", "sample_negatives",
    "EmbeddingTable", "estimate_cold_start",
    "TrainingPairSets", "eq6_loss", "train",
    "link_prediction_eval",
]
