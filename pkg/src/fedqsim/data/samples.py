"""Sample construction and columnar datasets for the two models.

Watch histories use a sliding window: with a user's interactions ordered by
the chosen mode, the sample for target position i (1-based, i >= 2) has the
previous ``min(window, i-1)`` watches as history, so a user with n
interactions yields n-1 samples and history lengths grow 1..window before
the window slides.  History cells store ``movie_id + 1`` (0 is padding);
targets store the 0-based movie id.

Rating samples are one per interaction: (user, movie, genres, movie age) ->
rating class ``2*rating - 1``.  Movie age is the corpus min-max map of
``reference_year - release_year`` onto [-1, 1], oldest movie -> 1.

Datasets serialize to a small binary container (magic ``FQD1``): magic,
version u16, kind u8, a u32-length JSON attrs block, then named typed array
blocks (name, dtype code u8, rank u32, dims u32 each, raw little-endian
payload).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from fedqsim.errors import ConfigurationError, DataError
from fedqsim.data.types import InteractionTable, MovieTable, OrderingMode

DATASET_MAGIC = b"FQD1"
DATASET_VERSION = 1
_KIND_WATCH = 0
_KIND_RATING = 1
_DTYPES = {0: "<i4", 1: "<i8", 2: "<f8"}
_DTYPE_CODES = {np.dtype(np.int32): 0, np.dtype(np.int64): 1, np.dtype(np.float64): 2}


@dataclass
class WatchHistoryBatch:
    histories: np.ndarray   # int32 (B, W), movie_id + 1, 0-padded
    lengths: np.ndarray     # int32 (B,)
    targets: np.ndarray     # int64 (B,), movie ids


@dataclass
class RatingBatch:
    user_ids: np.ndarray       # int32 (B,)
    movie_ids: np.ndarray      # int32 (B,)
    genre_ids: np.ndarray      # int32 (B, Gmax), 0-padded
    genre_lengths: np.ndarray  # int32 (B,)
    movie_age: np.ndarray      # float64 (B,)
    targets: np.ndarray        # int64 (B,), rating classes 0..9

    @property
    def rating_class(self) -> np.ndarray:
        return self.targets


class _ArrayDataset:
    """Shared machinery: index sets, subsetting, deterministic batching."""

    _array_fields: tuple[str, ...] = ()

    def __len__(self) -> int:
        return int(getattr(self, self._array_fields[0]).shape[0])

    def subset(self, indices: np.ndarray):
        indices = np.asarray(indices, dtype=np.int64)
        clone = self.__class__.__new__(self.__class__)
        clone.__dict__.update(self.__dict__)
        for name in self._array_fields:
            setattr(clone, name, getattr(self, name)[indices])
        return clone

    def _batch(self, sl):
        raise NotImplementedError

    def iter_batches(self, batch_size: int, rng: np.random.Generator | None = None):
        """Yields batches of ``batch_size`` (last one may be short).

        Sequential order by default; with ``rng``, one fresh permutation is
        drawn first (an SGD epoch).
        """
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        n = len(self)
        order = rng.permutation(n) if rng is not None else np.arange(n)
        for start in range(0, n, batch_size):
            yield self._batch(order[start : start + batch_size])


class WatchHistoryDataset(_ArrayDataset):
    _array_fields = ("histories", "lengths", "targets", "user_indices")

    def __init__(
        self,
        histories: np.ndarray,
        lengths: np.ndarray,
        targets: np.ndarray,
        user_indices: np.ndarray,
        window: int,
        num_movies: int,
        num_users: int,
    ):
        self.histories = histories
        self.lengths = lengths
        self.targets = targets
        self.user_indices = user_indices
        self.window = window
        self.num_movies = num_movies
        self.num_users = num_users

    def _batch(self, sl) -> WatchHistoryBatch:
        return WatchHistoryBatch(self.histories[sl], self.lengths[sl], self.targets[sl])

    def sample_user_ids(self) -> np.ndarray:
        return self.user_indices

    def id_coverage_spaces(self) -> dict[str, np.ndarray]:
        """Per id space, the first sample index covering each id (-1 if absent).

        The movie space must stay covered in any training split: every movie
        id is both an output class and (shifted) an input row.
        """
        first = np.full(self.num_movies, -1, dtype=np.int64)
        # Later writes win under np.ufunc-free assignment, so iterate reversed
        # sample order to leave the first occurrence in place.
        order = np.arange(len(self) - 1, -1, -1)
        first[self.targets[order]] = order
        flat_rows = np.repeat(np.arange(len(self)), self.histories.shape[1])[::-1]
        flat_vals = self.histories.reshape(-1)[::-1]
        valid = flat_vals > 0
        first[flat_vals[valid] - 1] = flat_rows[valid]
        return {"movie": first}


class RatingDataset(_ArrayDataset):
    _array_fields = ("user_ids", "movie_ids", "genre_ids", "genre_lengths", "movie_age", "targets")

    def __init__(
        self,
        user_ids: np.ndarray,
        movie_ids: np.ndarray,
        genre_ids: np.ndarray,
        genre_lengths: np.ndarray,
        movie_age: np.ndarray,
        targets: np.ndarray,
        num_users: int,
        num_movies: int,
        num_genres: int,
    ):
        self.user_ids = user_ids
        self.movie_ids = movie_ids
        self.genre_ids = genre_ids
        self.genre_lengths = genre_lengths
        self.movie_age = movie_age
        self.targets = targets
        self.num_users = num_users
        self.num_movies = num_movies
        self.num_genres = num_genres

    def _batch(self, sl) -> RatingBatch:
        return RatingBatch(
            self.user_ids[sl], self.movie_ids[sl], self.genre_ids[sl],
            self.genre_lengths[sl], self.movie_age[sl], self.targets[sl],
        )

    def sample_user_ids(self) -> np.ndarray:
        return self.user_ids

    def id_coverage_spaces(self) -> dict[str, np.ndarray]:
        spaces: dict[str, np.ndarray] = {}
        order = np.arange(len(self) - 1, -1, -1)
        for name, ids, count in (
            ("user", self.user_ids, self.num_users),
            ("movie", self.movie_ids, self.num_movies),
        ):
            first = np.full(count, -1, dtype=np.int64)
            first[ids[order]] = order
            spaces[name] = first
        first = np.full(self.num_genres, -1, dtype=np.int64)
        flat_rows = np.repeat(np.arange(len(self)), self.genre_ids.shape[1])[::-1]
        flat_vals = self.genre_ids.reshape(-1)[::-1]
        mask = np.arange(self.genre_ids.shape[1])[None, :] < self.genre_lengths[:, None]
        valid = mask.reshape(-1)[::-1]
        first[flat_vals[valid]] = flat_rows[valid]
        spaces["genre"] = first
        return spaces


def _ordering_permutation(
    mode: OrderingMode,
    timestamps: np.ndarray,
    ratings: np.ndarray,
    rng: np.random.Generator | None,
) -> np.ndarray:
    n = timestamps.shape[0]
    if mode is OrderingMode.RANDOM:
        if rng is None:
            raise ConfigurationError("ordering=random requires an rng")
        return rng.permutation(n)
    if mode is OrderingMode.TIMESTAMP_ASC:
        return np.argsort(timestamps, kind="stable")
    if mode is OrderingMode.TIMESTAMP_DESC:
        return np.argsort(-timestamps, kind="stable")
    if mode is OrderingMode.RATING_ASC:
        return np.argsort(ratings, kind="stable")
    if mode is OrderingMode.RATING_DESC:
        return np.argsort(-ratings, kind="stable")
    raise ConfigurationError(f"unknown ordering mode {mode!r}")


def build_watch_histories(
    interactions: InteractionTable,
    window: int,
    ordering: OrderingMode = OrderingMode.TIMESTAMP_ASC,
    rng: np.random.Generator | None = None,
) -> WatchHistoryDataset:
    if window < 1:
        raise ConfigurationError(f"window must be >= 1, got {window}")
    n = len(interactions)
    by_user = np.argsort(interactions.user_ids, kind="stable")
    user_sorted = interactions.user_ids[by_user]
    boundaries = np.flatnonzero(np.diff(user_sorted)) + 1
    group_starts = np.concatenate(([0], boundaries))
    group_ends = np.concatenate((boundaries, [n]))

    histories: list[np.ndarray] = []
    lengths: list[np.ndarray] = []
    targets: list[np.ndarray] = []
    users: list[np.ndarray] = []
    for start, end in zip(group_starts, group_ends):
        rows = by_user[start:end]
        count = rows.shape[0]
        if count < 2:
            continue
        perm = _ordering_permutation(
            ordering, interactions.timestamps[rows], interactions.ratings[rows], rng
        )
        ordered_movies = interactions.movie_ids[rows][perm].astype(np.int64)
        m = count - 1
        hist = np.zeros((m, window), dtype=np.int32)
        lens = np.minimum(np.arange(1, count), window).astype(np.int32)
        for j in range(m):
            w = int(lens[j])
            hist[j, :w] = ordered_movies[j + 1 - w : j + 1] + 1
        histories.append(hist)
        lengths.append(lens)
        targets.append(ordered_movies[1:])
        users.append(np.full(m, user_sorted[start], dtype=np.int32))

    if histories:
        return WatchHistoryDataset(
            np.concatenate(histories), np.concatenate(lengths), np.concatenate(targets),
            np.concatenate(users), window, interactions.num_movies, interactions.num_users,
        )
    return WatchHistoryDataset(
        np.zeros((0, window), dtype=np.int32), np.zeros(0, dtype=np.int32),
        np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int32),
        window, interactions.num_movies, interactions.num_users,
    )


def movie_age_values(movies: MovieTable, reference_year: int | None = None) -> np.ndarray:
    """Per-movie age scaled onto [-1, 1]; oldest movie 1, newest -1."""
    years = movies.release_years.astype(np.float64)
    ref = float(reference_year) if reference_year is not None else float(years.max())
    ages = ref - years
    lo, hi = float(ages.min()), float(ages.max())
    if hi == lo:
        return np.zeros(len(movies))
    return 2.0 * (ages - lo) / (hi - lo) - 1.0


def build_rating_samples(
    interactions: InteractionTable,
    movies: MovieTable,
    use_movie_age: bool = True,
    reference_year: int | None = None,
) -> RatingDataset:
    if len(movies) < interactions.num_movies:
        raise DataError(
            f"movie table covers {len(movies)} movies but interactions reference {interactions.num_movies}"
        )
    ages = movie_age_values(movies, reference_year) if use_movie_age else np.zeros(len(movies))
    classes = np.round(interactions.ratings * 2.0 - 1.0).astype(np.int64)
    mids = interactions.movie_ids.astype(np.int64)
    return RatingDataset(
        user_ids=interactions.user_ids.astype(np.int32),
        movie_ids=interactions.movie_ids.astype(np.int32),
        genre_ids=movies.genre_ids[mids],
        genre_lengths=movies.genre_lengths[mids],
        movie_age=ages[mids],
        targets=classes,
        num_users=interactions.num_users,
        num_movies=interactions.num_movies,
        num_genres=movies.num_genres,
    )


# ---------------------------------------------------------------------------
# Binary container


def _write_block(fh, name: str, array: np.ndarray) -> None:
    code = _DTYPE_CODES.get(array.dtype)
    if code is None:
        raise ConfigurationError(f"array {name!r}: unsupported dtype {array.dtype}")
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<H", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<B", code))
    fh.write(struct.pack("<I", array.ndim))
    for d in array.shape:
        fh.write(struct.pack("<I", d))
    fh.write(np.ascontiguousarray(array).astype(_DTYPES[code]).tobytes())


def save_dataset(dataset, path) -> None:
    if isinstance(dataset, WatchHistoryDataset):
        kind = _KIND_WATCH
        attrs = {
            "window": dataset.window,
            "num_movies": dataset.num_movies,
            "num_users": dataset.num_users,
        }
        arrays = {name: getattr(dataset, name) for name in dataset._array_fields}
    elif isinstance(dataset, RatingDataset):
        kind = _KIND_RATING
        attrs = {
            "num_users": dataset.num_users,
            "num_movies": dataset.num_movies,
            "num_genres": dataset.num_genres,
        }
        arrays = {name: getattr(dataset, name) for name in dataset._array_fields}
    else:
        raise ConfigurationError(f"cannot serialize dataset of type {type(dataset).__name__}")
    attr_blob = json.dumps(attrs, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<H", DATASET_VERSION))
        fh.write(struct.pack("<B", kind))
        fh.write(struct.pack("<I", len(attr_blob)))
        fh.write(attr_blob)
        fh.write(struct.pack("<I", len(arrays)))
        for name, array in arrays.items():
            _write_block(fh, name, array)


def load_dataset(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != DATASET_MAGIC:
        raise DataError(f"{path}: bad magic {blob[:4]!r}, expected {DATASET_MAGIC!r}")
    pos = 4

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise DataError(f"{path}: truncated at byte {pos}")
        out = blob[pos : pos + n]
        pos += n
        return out

    (version,) = struct.unpack("<H", take(2))
    if version != DATASET_VERSION:
        raise DataError(f"{path}: unsupported dataset container version {version}")
    (kind,) = struct.unpack("<B", take(1))
    (attr_len,) = struct.unpack("<I", take(4))
    attrs = json.loads(take(attr_len).decode("utf-8"))
    (n_arrays,) = struct.unpack("<I", take(4))
    arrays: dict[str, np.ndarray] = {}
    for _ in range(n_arrays):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (code,) = struct.unpack("<B", take(1))
        if code not in _DTYPES:
            raise DataError(f"{path}: unknown dtype code {code} for array {name!r}")
        (rank,) = struct.unpack("<I", take(4))
        shape = tuple(struct.unpack("<I", take(4))[0] for _ in range(rank))
        n_vals = int(np.prod(shape, dtype=np.int64)) if shape else 1
        dtype = np.dtype(_DTYPES[code])
        raw = take(n_vals * dtype.itemsize)
        arrays[name] = np.frombuffer(raw, dtype=dtype).astype(dtype.newbyteorder("=")).reshape(shape)
    if pos != len(blob):
        raise DataError(f"{path}: {len(blob) - pos} trailing bytes")
    if kind == _KIND_WATCH:
        return WatchHistoryDataset(
            arrays["histories"], arrays["lengths"], arrays["targets"], arrays["user_indices"],
            int(attrs["window"]), int(attrs["num_movies"]), int(attrs["num_users"]),
        )
    if kind == _KIND_RATING:
        return RatingDataset(
            arrays["user_ids"], arrays["movie_ids"], arrays["genre_ids"], arrays["genre_lengths"],
            arrays["movie_age"], arrays["targets"],
            int(attrs["num_users"]), int(attrs["num_movies"]), int(attrs["num_genres"]),
        )
    raise DataError(f"{path}: unknown dataset kind {kind}")
