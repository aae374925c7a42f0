"""Toroidal embedding geometry, quantisation, training, and retrieval."""

from ._version import __version__
from .data import EmbeddingSet, Encoding, SyntheticDataset
from .exceptions import ToroidalError
from .geometry import (
    GeometryProjector,
    GeometryTag,
    clifford_project,
    clifford_to_flat,
    flat_to_clifford,
    l2_normalize,
    l2p_project,
    validate_geometry,
)
from .io import (
    RunManifest,
    load_codebook,
    load_embeddings,
    save_codebook,
    save_embeddings,
)
from .metrics import (
    DistanceKind,
    cc_norm,
    cosine_distance,
    distance_distribution_sim,
    flat_torus_distance,
    hamming_distance,
    int_torus_distance,
    pairwise_distances,
)
from .quantization import (
    GridQuantizer,
    PQCodebook,
    ProductQuantizer,
    QuantConfig,
    bits_per_vector,
    codebook_scalars,
    dequantize_set,
    grid_dequantize,
    grid_quantize,
    pq_decode,
    pq_encode,
    pq_train,
    quantize_set,
)
from .retrieval import (
    EvalReport,
    eval_pipeline,
    few_shot_eval,
    knn_search,
    precision_at_1,
)
from .training import (
    ContrastiveEmbedder,
    TrainConfig,
    TrainResult,
    circular_variance,
    clip_gradients,
    koleo_loss,
    project_backward,
    project_for_geometry,
    supcon_loss,
    train,
)

__all__ = [
    "__version__",
    "ContrastiveEmbedder",
    "DistanceKind",
    "EmbeddingSet",
    "Encoding",
    "EvalReport",
    "GeometryProjector",
    "GeometryTag",
    "GridQuantizer",
    "PQCodebook",
    "ProductQuantizer",
    "QuantConfig",
    "RunManifest",
    "SyntheticDataset",
    "ToroidalError",
    "TrainConfig",
    "TrainResult",
    "bits_per_vector",
    "cc_norm",
    "circular_variance",
    "clifford_project",
    "clifford_to_flat",
    "clip_gradients",
    "codebook_scalars",
    "cosine_distance",
    "dequantize_set",
    "distance_distribution_sim",
    "eval_pipeline",
    "few_shot_eval",
    "flat_to_clifford",
    "flat_torus_distance",
    "grid_dequantize",
    "grid_quantize",
    "hamming_distance",
    "int_torus_distance",
    "knn_search",
    "koleo_loss",
    "l2_normalize",
    "l2p_project",
    "load_codebook",
    "load_embeddings",
    "pairwise_distances",
    "pq_decode",
    "pq_encode",
    "pq_train",
    "precision_at_1",
    "project_backward",
    "project_for_geometry",
    "quantize_set",
    "save_codebook",
    "save_embeddings",
    "supcon_loss",
    "train",
    "validate_geometry",
]
