"""Core corpus types.

Large corpora are held as structure-of-arrays tables; the per-row dataclasses
(:class:`Interaction`, :class:`MovieMeta`) are convenience views for tests and
small-scale inspection.  All ids in tables are dense and 0-based after
remapping.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from fedqsim.errors import DataError

RATING_GRID = tuple(0.5 * k for k in range(1, 11))


class OrderingMode(enum.Enum):
    """Per-user interaction ordering applied before history construction."""

    TIMESTAMP_ASC = "timestamp_asc"
    TIMESTAMP_DESC = "timestamp_desc"
    RATING_ASC = "rating_asc"
    RATING_DESC = "rating_desc"
    RANDOM = "random"


@dataclass(frozen=True)
class Interaction:
    user_id: int
    movie_id: int
    rating: float
    timestamp: int

    def validate(self) -> None:
        if round(self.rating * 2.0) != self.rating * 2.0 or not 0.5 <= self.rating <= 5.0:
            raise DataError(f"rating {self.rating} not on the half-star grid 0.5..5.0")
        if self.timestamp < 0:
            raise DataError(f"timestamp {self.timestamp} is negative")


@dataclass(frozen=True)
class MovieMeta:
    movie_id: int
    genre_ids: tuple[int, ...]
    release_year: int


@dataclass
class InteractionTable:
    """Columnar interaction store with dense 0-based user and movie ids."""

    user_ids: np.ndarray      # int32 (S,)
    movie_ids: np.ndarray     # int32 (S,)
    ratings: np.ndarray       # float64 (S,)
    timestamps: np.ndarray    # int64 (S,)
    num_users: int
    num_movies: int

    def __len__(self) -> int:
        return int(self.user_ids.shape[0])

    def row(self, i: int) -> Interaction:
        return Interaction(
            int(self.user_ids[i]), int(self.movie_ids[i]),
            float(self.ratings[i]), int(self.timestamps[i]),
        )

    def validate(self) -> None:
        n = len(self)
        for name, a in (("user_ids", self.user_ids), ("movie_ids", self.movie_ids),
                        ("ratings", self.ratings), ("timestamps", self.timestamps)):
            if a.shape != (n,):
                raise DataError(f"interactions: column {name} has shape {a.shape}, expected ({n},)")
        if n == 0:
            return
        if self.user_ids.min() < 0 or self.user_ids.max() >= self.num_users:
            raise DataError("interactions: user id out of range after remap")
        if self.movie_ids.min() < 0 or self.movie_ids.max() >= self.num_movies:
            raise DataError("interactions: movie id out of range after remap")
        doubled = self.ratings * 2.0
        if not np.all((doubled == np.round(doubled)) & (self.ratings >= 0.5) & (self.ratings <= 5.0)):
            bad = int(np.argmin((doubled == np.round(doubled)) & (self.ratings >= 0.5) & (self.ratings <= 5.0)))
            raise DataError(f"interactions: rating {self.ratings[bad]} at row {bad} not on the half-star grid")
        if self.timestamps.min() < 0:
            raise DataError("interactions: negative timestamp")


@dataclass
class MovieTable:
    """Columnar movie metadata; genre lists padded with 0 and masked by length."""

    genre_ids: np.ndarray       # int32 (M, Gmax), 0-padded
    genre_lengths: np.ndarray   # int32 (M,), >= 1
    release_years: np.ndarray   # int32 (M,)
    genre_names: list[str]

    def __len__(self) -> int:
        return int(self.genre_ids.shape[0])

    @property
    def num_genres(self) -> int:
        return len(self.genre_names)

    def row(self, movie_id: int) -> MovieMeta:
        length = int(self.genre_lengths[movie_id])
        return MovieMeta(
            movie_id,
            tuple(int(g) for g in self.genre_ids[movie_id, :length]),
            int(self.release_years[movie_id]),
        )

    def validate(self) -> None:
        if len(self) and self.genre_lengths.min() < 1:
            bad = int(np.argmin(self.genre_lengths))
            raise DataError(f"movie {bad}: empty genre list (use the reserved '(no genres listed)' id)")


@dataclass
class RemapTables:
    """Dense-id to original-id maps, persisted so models can serve raw ids."""

    user_original_ids: np.ndarray   # int64 (U,), index = dense id
    movie_original_ids: np.ndarray  # int64 (M,)
    unrated_movie_count: int = 0    # movies.csv rows that never appear in ratings

    def to_dict(self) -> dict:
        return {
            "user_original_ids": self.user_original_ids.tolist(),
            "movie_original_ids": self.movie_original_ids.tolist(),
            "unrated_movie_count": self.unrated_movie_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RemapTables":
        return cls(
            np.asarray(d["user_original_ids"], dtype=np.int64),
            np.asarray(d["movie_original_ids"], dtype=np.int64),
            int(d.get("unrated_movie_count", 0)),
        )
