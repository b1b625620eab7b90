"""IVF-flat vector index with lock-free block-based real-time insertion."""

from blockivf._core import (
    BaselineIndex,
    ClusterIndex,
    PoolExhaustedError,
    exact_knn,
    load_fvecs,
    load_ivecs,
    replay_workload,
    save_fvecs,
    save_ivecs,
    synthetic_dataset,
)

__all__ = [
    "BaselineIndex",
    "ClusterIndex",
    "PoolExhaustedError",
    "exact_knn",
    "load_fvecs",
    "load_ivecs",
    "replay_workload",
    "save_fvecs",
    "save_ivecs",
    "synthetic_dataset",
]

__version__ = "0.1.0"
