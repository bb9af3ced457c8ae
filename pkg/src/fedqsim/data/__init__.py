"""Corpus ingestion, preprocessing, partitioning, and a synthetic generator."""

from __future__ import annotations

from fedqsim.data.types import (
    Interaction,
    InteractionTable,
    MovieMeta,
    MovieTable,
    OrderingMode,
    RemapTables,
)
from fedqsim.data.movielens import load_interactions
from fedqsim.data.stats import DatasetStats, dataset_stats
from fedqsim.data.samples import (
    RatingBatch,
    RatingDataset,
    WatchHistoryBatch,
    WatchHistoryDataset,
    build_rating_samples,
    build_watch_histories,
    load_dataset,
    save_dataset,
)
from fedqsim.data.partition import (
    ClientPartition,
    load_partition,
    partition_by_user,
    partition_iid,
    save_partition,
    train_val_split,
)
from fedqsim.data.synthetic import generate_synthetic

__all__ = [
    "Interaction",
    "InteractionTable",
    "MovieMeta",
    "MovieTable",
    "OrderingMode",
    "RemapTables",
    "load_interactions",
    "DatasetStats",
    "dataset_stats",
    "WatchHistoryBatch",
    "WatchHistoryDataset",
    "RatingBatch",
    "RatingDataset",
    "build_watch_histories",
    "build_rating_samples",
    "save_dataset",
    "load_dataset",
    "ClientPartition",
    "partition_iid",
    "partition_by_user",
    "train_val_split",
    "save_partition",
    "load_partition",
    "generate_synthetic",
]
