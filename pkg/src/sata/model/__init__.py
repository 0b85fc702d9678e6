"""Model architecture, batching and configuration."""

from .batch import GraphBatch, collate, check_edges, sequence_batch, static_batch, window_arrays
from .bottleneck import RVQBottleneck, VAEBottleneck, kl_divergence, nearest_code, residual_quantize, utilization
from .config import ModelConfig
from .layers import (MultiHeadAttention, SeAM, SpatialBlock, TemporalBlock, from_streams, positional_encoding,
                     sincos_features, to_streams)
from .network import SATA, Block, Decoder, Encoder

__all__ = [
    "GraphBatch", "collate", "check_edges", "sequence_batch", "static_batch", "window_arrays",
    "RVQBottleneck", "VAEBottleneck", "kl_divergence", "nearest_code", "residual_quantize", "utilization",
    "ModelConfig", "MultiHeadAttention", "SeAM", "SpatialBlock", "TemporalBlock", "from_streams",
    "positional_encoding", "sincos_features", "to_streams", "SATA", "Block", "Decoder", "Encoder",
]
