"""MovieLens-format CSV ingestion.

Expected inputs:

* ratings CSV with header ``userId,movieId,rating,timestamp``;
* movies CSV with header ``movieId,title,genres`` (genres pipe-separated),
  optionally extended with a ``releaseYear`` column;
* an optional sidecar CSV ``movieId,releaseYear`` when the movies file has no
  year column.  As a last resort the year is taken from a ``(YYYY)`` suffix in
  the title, the MovieLens convention.

Ids are remapped to dense 0-based ranges: users sorted by original id; movies
sorted by original id, restricted to movies that actually appear in ratings
(unrated catalogue rows are counted but excluded from the model vocabulary).
"""

from __future__ import annotations

import csv
import re
from pathlib import Path

import numpy as np

from fedqsim.errors import DataError
from fedqsim.data.types import InteractionTable, MovieTable, RemapTables

NO_GENRES = "(no genres listed)"
_TITLE_YEAR = re.compile(r"\((\d{4})\)\s*$")


def _parse_ratings(path) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    users: list[int] = []
    movies: list[int] = []
    ratings: list[float] = []
    times: list[int] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:4]] != ["userId", "movieId", "rating", "timestamp"]:
            raise DataError(f"{path}: expected header userId,movieId,rating,timestamp, got {header}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 4:
                raise DataError(f"{path}:{line_no}: expected 4 fields, got {len(row)}")
            try:
                u = int(row[0])
                m = int(row[1])
                r = float(row[2])
                t = int(float(row[3]))
            except ValueError as exc:
                raise DataError(f"{path}:{line_no}: malformed row: {exc}") from None
            if r * 2.0 != round(r * 2.0) or not 0.5 <= r <= 5.0:
                raise DataError(f"{path}:{line_no}: rating {r} not on the 0.5..5.0 half-star grid")
            if t < 0:
                raise DataError(f"{path}:{line_no}: negative timestamp {t}")
            users.append(u)
            movies.append(m)
            ratings.append(r)
            times.append(t)
    if not users:
        raise DataError(f"{path}: no interaction rows")
    return (
        np.asarray(users, dtype=np.int64),
        np.asarray(movies, dtype=np.int64),
        np.asarray(ratings, dtype=np.float64),
        np.asarray(times, dtype=np.int64),
    )


def _parse_movies(path, sidecar_years: dict[int, int]) -> dict[int, tuple[list[str], int | None]]:
    out: dict[int, tuple[list[str], int | None]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["movieId", "title", "genres"]:
            raise DataError(f"{path}: expected header movieId,title,genres, got {header}")
        year_col = None
        for i, h in enumerate(header):
            if h.strip() == "releaseYear":
                year_col = i
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 3:
                raise DataError(f"{path}:{line_no}: expected at least 3 fields, got {len(row)}")
            try:
                mid = int(row[0])
            except ValueError:
                raise DataError(f"{path}:{line_no}: malformed movieId {row[0]!r}") from None
            genres = [g for g in row[2].split("|") if g] or [NO_GENRES]
            year: int | None = None
            if year_col is not None and year_col < len(row) and row[year_col].strip():
                try:
                    year = int(row[year_col])
                except ValueError:
                    raise DataError(f"{path}:{line_no}: malformed releaseYear {row[year_col]!r}") from None
            elif mid in sidecar_years:
                year = sidecar_years[mid]
            else:
                m = _TITLE_YEAR.search(row[1])
                if m:
                    year = int(m.group(1))
            out[mid] = (genres, year)
    if not out:
        raise DataError(f"{path}: no movie rows")
    return out


def _parse_year_sidecar(path) -> dict[int, int]:
    years: dict[int, int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["movieId", "releaseYear"]:
            raise DataError(f"{path}: expected header movieId,releaseYear, got {header}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                years[int(row[0])] = int(row[1])
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}:{line_no}: malformed row: {exc}") from None
    return years


def load_interactions(
    ratings_source,
    movies_source,
    release_year_source=None,
) -> tuple[InteractionTable, MovieTable, RemapTables]:
    """Loads and remaps a MovieLens-format corpus.

    Returns the interaction table (dense ids), the movie table restricted to
    rated movies, and the remap tables back to original ids.
    """
    ratings_source = Path(ratings_source)
    movies_source = Path(movies_source)
    raw_users, raw_movies, ratings, times = _parse_ratings(ratings_source)
    sidecar = _parse_year_sidecar(release_year_source) if release_year_source else {}
    movie_info = _parse_movies(movies_source, sidecar)

    user_originals, dense_users = np.unique(raw_users, return_inverse=True)
    rated_movie_originals, dense_movies = np.unique(raw_movies, return_inverse=True)

    missing = [int(m) for m in rated_movie_originals if int(m) not in movie_info]
    if missing:
        raise DataError(
            f"{ratings_source}: {len(missing)} rated movie ids missing from {movies_source} "
            f"(first: {missing[:5]})"
        )

    genre_names = sorted({g for mid in rated_movie_originals for g in movie_info[int(mid)][0]})
    genre_index = {g: i for i, g in enumerate(genre_names)}
    max_genres = max(len(movie_info[int(mid)][0]) for mid in rated_movie_originals)

    n_movies = len(rated_movie_originals)
    genre_ids = np.zeros((n_movies, max_genres), dtype=np.int32)
    genre_lengths = np.zeros(n_movies, dtype=np.int32)
    release_years = np.zeros(n_movies, dtype=np.int32)
    for dense_id, mid in enumerate(rated_movie_originals):
        genres, year = movie_info[int(mid)]
        if year is None:
            raise DataError(
                f"movie {int(mid)}: no release year (add a releaseYear column, a sidecar file, "
                f"or a '(YYYY)' title suffix)"
            )
        gids = [genre_index[g] for g in genres]
        genre_ids[dense_id, : len(gids)] = gids
        genre_lengths[dense_id] = len(gids)
        release_years[dense_id] = year

    interactions = InteractionTable(
        user_ids=dense_users.astype(np.int32),
        movie_ids=dense_movies.astype(np.int32),
        ratings=ratings,
        timestamps=times,
        num_users=len(user_originals),
        num_movies=n_movies,
    )
    movie_table = MovieTable(genre_ids, genre_lengths, release_years, genre_names)
    remap = RemapTables(
        user_original_ids=user_originals.astype(np.int64),
        movie_original_ids=rated_movie_originals.astype(np.int64),
        unrated_movie_count=len(movie_info) - n_movies,
    )
    interactions.validate()
    movie_table.validate()
    return interactions, movie_table, remap
