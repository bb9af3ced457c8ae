"""Synthetic corpus generator for desk-scale experiments.

Mimics the structure that matters for the federated experiments: users belong
to preference clusters, each favoring a small genre subset (non-IID-ness
across per-user clients); per-user interaction counts are log-normal
(imbalance); movie popularity follows a Zipf law; per-user timestamps
strictly increase; and ratings skew positive, higher for movies inside the
user's favored genres so the ranker has signal.

Consecutive watches carry genre momentum: a user stays on their current genre
with high probability and occasionally re-draws it from the cluster
preference.  This gives timestamp-ordered histories real predictive value
over shuffled ones, the property the ordering comparison experiments probe.

Deterministic: one seeded generator, fixed draw order, byte-identical output
per seed.
"""

from __future__ import annotations

import numpy as np

from fedqsim.errors import ConfigurationError
from fedqsim.data.types import InteractionTable, MovieTable

RATING_CLASSES = 10


def generate_synthetic(
    num_users: int,
    num_movies: int,
    num_genres: int,
    cluster_count: int,
    lognormal_mu: float,
    lognormal_sigma: float,
    zipf_s: float,
    seed: int,
    *,
    favored_genres_per_cluster: int = 3,
    favored_boost: float = 8.0,
    genre_switch_prob: float = 0.3,
    extra_genre_prob: float = 0.25,
    mean_gap_seconds: float = 6 * 3600.0,
) -> tuple[InteractionTable, MovieTable]:
    for name, v in (("num_users", num_users), ("num_movies", num_movies),
                    ("num_genres", num_genres), ("cluster_count", cluster_count)):
        if v < 1:
            raise ConfigurationError(f"generate_synthetic: {name} must be >= 1, got {v}")
    if lognormal_sigma < 0:
        raise ConfigurationError(f"generate_synthetic: lognormal_sigma must be >= 0, got {lognormal_sigma}")
    if zipf_s < 0:
        raise ConfigurationError(f"generate_synthetic: zipf_s must be >= 0, got {zipf_s}")
    rng = np.random.default_rng(seed)

    # Movies: primary genre uniform, occasional second genre, Zipf popularity
    # over a random rank permutation, release years spread across decades.
    primary = rng.integers(0, num_genres, size=num_movies)
    second = rng.integers(0, num_genres, size=num_movies)
    has_second = (rng.random(num_movies) < extra_genre_prob) & (second != primary)
    genre_ids = np.zeros((num_movies, 2), dtype=np.int32)
    genre_ids[:, 0] = primary
    genre_ids[np.flatnonzero(has_second), 1] = second[has_second]
    genre_lengths = np.where(has_second, 2, 1).astype(np.int32)
    release_years = rng.integers(1950, 2024, size=num_movies).astype(np.int32)
    genre_names = [f"genre_{g:02d}" for g in range(num_genres)]
    movies = MovieTable(genre_ids, genre_lengths, release_years, genre_names)

    ranks = rng.permutation(num_movies) + 1
    popularity = 1.0 / ranks.astype(np.float64) ** zipf_s

    # Per-genre movie pools (a movie with two genres sits in both pools).
    genre_pools: list[np.ndarray] = []
    genre_pool_probs: list[np.ndarray] = []
    for g in range(num_genres):
        members = np.flatnonzero((primary == g) | (has_second & (second == g)))
        if members.size == 0:
            members = np.arange(num_movies)
        w = popularity[members]
        genre_pools.append(members)
        genre_pool_probs.append(w / w.sum())

    # Cluster preferences over genres.
    k = min(favored_genres_per_cluster, num_genres)
    cluster_favored = [rng.choice(num_genres, size=k, replace=False) for _ in range(cluster_count)]
    cluster_genre_probs = []
    for favored in cluster_favored:
        w = np.ones(num_genres)
        w[favored] *= favored_boost
        cluster_genre_probs.append(w / w.sum())

    user_cluster = rng.integers(0, cluster_count, size=num_users)
    counts = np.maximum(2, np.round(rng.lognormal(lognormal_mu, lognormal_sigma, size=num_users))).astype(np.int64)

    all_users: list[np.ndarray] = []
    all_movies: list[np.ndarray] = []
    all_ratings: list[np.ndarray] = []
    all_times: list[np.ndarray] = []
    base_time = 1_000_000_000
    for u in range(num_users):
        c = int(user_cluster[u])
        n_u = int(counts[u])
        favored_mask = np.zeros(num_genres, dtype=bool)
        favored_mask[cluster_favored[c]] = True
        genre_probs = cluster_genre_probs[c]

        watched = set()
        seq = np.empty(n_u, dtype=np.int64)
        favored_flags = np.empty(n_u, dtype=bool)
        genre = int(rng.choice(num_genres, p=genre_probs))
        for i in range(n_u):
            if i > 0 and rng.random() < genre_switch_prob:
                genre = int(rng.choice(num_genres, p=genre_probs))
            movie = _draw_movie(rng, genre_pools[genre], genre_pool_probs[genre], watched, popularity)
            watched.add(movie)
            seq[i] = movie
            favored_flags[i] = favored_mask[primary[movie]] or (
                bool(has_second[movie]) and favored_mask[second[movie]]
            )

        center = np.where(favored_flags, 7.0, 5.0)
        classes = np.clip(np.round(rng.normal(center, 1.4)), 0, RATING_CLASSES - 1)
        ratings = 0.5 + 0.5 * classes
        gaps = np.maximum(60, rng.exponential(mean_gap_seconds, size=n_u)).astype(np.int64)
        start = base_time + int(rng.integers(0, 10_000_000))
        times = start + np.cumsum(gaps)

        all_users.append(np.full(n_u, u, dtype=np.int32))
        all_movies.append(seq.astype(np.int32))
        all_ratings.append(ratings)
        all_times.append(times)

    interactions = InteractionTable(
        user_ids=np.concatenate(all_users),
        movie_ids=np.concatenate(all_movies),
        ratings=np.concatenate(all_ratings),
        timestamps=np.concatenate(all_times),
        num_users=num_users,
        num_movies=num_movies,
    )
    interactions.validate()
    return interactions, movies


def _draw_movie(
    rng: np.random.Generator,
    pool: np.ndarray,
    pool_probs: np.ndarray,
    watched: set,
    popularity: np.ndarray,
) -> int:
    # Rejection-sample unwatched movies from the genre pool, then fall back
    # to the global popularity distribution restricted to unwatched movies.
    for _ in range(8):
        m = int(pool[rng.choice(pool.shape[0], p=pool_probs)])
        if m not in watched:
            return m
    remaining = np.setdiff1d(np.arange(popularity.shape[0]), np.fromiter(watched, dtype=np.int64))
    if remaining.size == 0:
        return int(pool[rng.choice(pool.shape[0], p=pool_probs)])
    w = popularity[remaining]
    return int(remaining[rng.choice(remaining.shape[0], p=w / w.sum())])
