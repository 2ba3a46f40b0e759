"""Audio-visual speech consistency scoring for face-forgery detection."""

from ._avsf import (
    AvsfError,
    assign,
    auc,
    build_benchmark,
    calibrate_threshold,
    cosine,
    evaluate,
    kmeans_fit,
    mfcc,
    read_embeddings,
    read_wav,
    run_cli,
    score,
    write_embeddings,
)

__all__ = [
    "AvsfError",
    "assign",
    "auc",
    "build_benchmark",
    "calibrate_threshold",
    "cosine",
    "evaluate",
    "kmeans_fit",
    "mfcc",
    "read_embeddings",
    "read_wav",
    "run_cli",
    "score",
    "write_embeddings",
]
