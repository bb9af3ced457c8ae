"""Corpus statistics: activity and rating-value distributions.

Histogram bin edges are fixed and documented here so downstream consumers can
rely on them:

* ratings-per-user and ratings-per-movie: 1-2-5 decade edges
  ``[1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10000, inf)``;
* per-user mean inter-rating time (seconds):
  ``[0, 60, 600, 3600, 21600, 86400, 604800, 2629800, 31557600, inf)``
  (minute, 10 minutes, hour, quarter day, day, week, month, year).

The inter-rating statistic follows the per-user reading: gaps are computed on
each user's timestamp-sorted ratings, averaged within the user, and the
corpus value is the mean of those per-user means (users with a single rating
contribute nothing).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fedqsim.errors import DataError
from fedqsim.data.types import InteractionTable

COUNT_BIN_EDGES = (1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10000, np.inf)
TIME_BIN_EDGES = (0, 60, 600, 3600, 21600, 86400, 604800, 2629800, 31557600, np.inf)


@dataclass
class DatasetStats:
    num_interactions: int
    num_users: int
    num_movies: int
    mean_ratings_per_user: float
    mean_ratings_per_movie: float
    mean_inter_rating_seconds: float
    rating_class_counts: np.ndarray        # (10,), class 0 = rating 0.5
    ratings_per_user_hist: np.ndarray      # counts per COUNT_BIN_EDGES bin
    ratings_per_movie_hist: np.ndarray
    inter_rating_seconds_hist: np.ndarray  # per-user means binned by TIME_BIN_EDGES

    def to_dict(self) -> dict:
        return {
            "num_interactions": self.num_interactions,
            "num_users": self.num_users,
            "num_movies": self.num_movies,
            "mean_ratings_per_user": self.mean_ratings_per_user,
            "mean_ratings_per_movie": self.mean_ratings_per_movie,
            "mean_inter_rating_seconds": self.mean_inter_rating_seconds,
            "rating_class_counts": self.rating_class_counts.tolist(),
            "ratings_per_user_hist": self.ratings_per_user_hist.tolist(),
            "ratings_per_movie_hist": self.ratings_per_movie_hist.tolist(),
            "inter_rating_seconds_hist": self.inter_rating_seconds_hist.tolist(),
            "count_bin_edges": [e if np.isfinite(e) else "inf" for e in COUNT_BIN_EDGES],
            "time_bin_edges": [e if np.isfinite(e) else "inf" for e in TIME_BIN_EDGES],
        }


def _hist(values: np.ndarray, edges: tuple) -> np.ndarray:
    return np.histogram(values, bins=np.asarray(edges, dtype=np.float64))[0].astype(np.int64)


def dataset_stats(interactions: InteractionTable) -> DatasetStats:
    if len(interactions) == 0:
        raise DataError("dataset_stats: empty corpus")
    user_counts = np.bincount(interactions.user_ids, minlength=interactions.num_users)
    movie_counts = np.bincount(interactions.movie_ids, minlength=interactions.num_movies)

    # Per-user mean gaps over timestamp-sorted interactions.
    order = np.lexsort((interactions.timestamps, interactions.user_ids))
    sorted_users = interactions.user_ids[order]
    sorted_times = interactions.timestamps[order]
    same_user = sorted_users[1:] == sorted_users[:-1]
    gaps = (sorted_times[1:] - sorted_times[:-1])[same_user]
    gap_users = sorted_users[1:][same_user]
    if gaps.size:
        gap_sums = np.bincount(gap_users, weights=gaps.astype(np.float64), minlength=interactions.num_users)
        gap_counts = np.bincount(gap_users, minlength=interactions.num_users)
        has_gaps = gap_counts > 0
        per_user_means = gap_sums[has_gaps] / gap_counts[has_gaps]
    else:
        per_user_means = np.zeros(0)

    classes = np.round(interactions.ratings * 2.0 - 1.0).astype(np.int64)
    return DatasetStats(
        num_interactions=len(interactions),
        num_users=interactions.num_users,
        num_movies=interactions.num_movies,
        mean_ratings_per_user=len(interactions) / interactions.num_users,
        mean_ratings_per_movie=len(interactions) / interactions.num_movies,
        mean_inter_rating_seconds=float(per_user_means.mean()) if per_user_means.size else 0.0,
        rating_class_counts=np.bincount(classes, minlength=10).astype(np.int64),
        ratings_per_user_hist=_hist(user_counts[user_counts > 0], COUNT_BIN_EDGES),
        ratings_per_movie_hist=_hist(movie_counts[movie_counts > 0], COUNT_BIN_EDGES),
        inter_rating_seconds_hist=_hist(per_user_means, TIME_BIN_EDGES),
    )
