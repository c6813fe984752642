"""Flow-unit embeddings from courier trajectories, pooling indices, and
real-time order-assignment search-space pruning."""

__version__ = "0.1.0"
