from .cache import read_embeddings, write_embeddings
from .flow import FlowField, compute_flow
from .kmeans import KMeansResult, kmeans
from .otsu import otsu_threshold
from .vlad import (
    CorpusEmbedding,
    DegenerateCorpusError,
    FlowCodebook,
    FlowSettings,
    build_flow_codebook,
    clip_embedding,
    clip_flows,
    embed_corpus,
    vlad_encode,
    vlad_vector,
)

__all__ = [
    "CorpusEmbedding",
    "DegenerateCorpusError",
    "FlowCodebook",
    "FlowField",
    "FlowSettings",
    "KMeansResult",
    "build_flow_codebook",
    "clip_embedding",
    "clip_flows",
    "compute_flow",
    "embed_corpus",
    "kmeans",
    "otsu_threshold",
    "read_embeddings",
    "vlad_encode",
    "vlad_vector",
    "write_embeddings",
]
