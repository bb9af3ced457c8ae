"""The two recommender architectures and their prediction/evaluation helpers.

Candidate generator: pooled watch-history embedding through a stack of
halving fully-connected blocks into a softmax over the movie vocabulary.
Input index 0 is reserved padding, so the input vocabulary is one larger than
the output vocabulary (history indices are movie id + 1).

Ranker: user/movie/genre embeddings (genres mean-pooled) concatenated with a
movie-age scalar, through fully-connected blocks into a softmax over the ten
half-star rating classes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fedqsim.errors import ConfigurationError
from fedqsim.nn.layers import (
    BatchNorm,
    Concat,
    Embedding,
    FullyConnected,
    GroupNorm,
    LayerSpec,
    MeanPoolOverSequence,
    ReLU,
)
from fedqsim.nn.losses import class_to_rating, softmax
from fedqsim.nn.network import BatchNormState, forward, parameter_count, validate_model_spec

NUM_RATING_CLASSES = 10


@dataclass(frozen=True)
class CandidateGeneratorConfig:
    """Next-watch model over a movie vocabulary.

    ``input_vocab_size`` counts the padding row: it must equal
    ``output_vocab_size + 1``.
    """

    input_vocab_size: int
    output_vocab_size: int
    embedding_dim: int = 64
    hidden_sizes: tuple[int, ...] = (1024, 512, 256)
    norm: str = "group"          # "group" | "batch" | "none"
    groupnorm_groups: int = 32
    norm_eps: float = 1e-5
    batchnorm_momentum: float = 0.1

    def validate(self) -> None:
        if self.input_vocab_size != self.output_vocab_size + 1:
            raise ConfigurationError(
                "candidate_generator: input_vocab_size must be output_vocab_size + 1 "
                f"(padding index 0 reserved), got {self.input_vocab_size} vs {self.output_vocab_size}"
            )
        if self.embedding_dim < 1:
            raise ConfigurationError(f"candidate_generator: embedding_dim must be >= 1, got {self.embedding_dim}")
        if any(h < 1 for h in self.hidden_sizes):
            raise ConfigurationError(f"candidate_generator: hidden sizes must be >= 1, got {self.hidden_sizes}")
        if self.norm not in ("group", "batch", "none"):
            raise ConfigurationError(f"candidate_generator: unknown norm {self.norm!r}")


@dataclass(frozen=True)
class RankerConfig:
    """Rating-class model over (user, movie, genres, movie age)."""

    num_users: int
    num_movies: int
    num_genres: int
    user_dim: int = 32
    movie_dim: int = 128
    genre_dim: int = 16
    hidden_sizes: tuple[int, ...] = (256,)
    num_classes: int = NUM_RATING_CLASSES
    use_movie_age: bool = True
    norm: str = "group"
    groupnorm_groups: int = 32
    norm_eps: float = 1e-5
    batchnorm_momentum: float = 0.1

    def validate(self) -> None:
        for name, v in (("num_users", self.num_users), ("num_movies", self.num_movies),
                        ("num_genres", self.num_genres)):
            if v < 1:
                raise ConfigurationError(f"ranker: {name} must be >= 1, got {v}")
        if any(h < 1 for h in self.hidden_sizes):
            raise ConfigurationError(f"ranker: hidden sizes must be >= 1, got {self.hidden_sizes}")
        if self.norm not in ("group", "batch", "none"):
            raise ConfigurationError(f"ranker: unknown norm {self.norm!r}")

    @property
    def concat_width(self) -> int:
        return self.user_dim + self.movie_dim + self.genre_dim + (1 if self.use_movie_age else 0)


def _norm_layer(config, name: str, channels: int) -> list[LayerSpec]:
    if config.norm == "group":
        return [GroupNorm(name, config.groupnorm_groups, channels, config.norm_eps)]
    if config.norm == "batch":
        return [BatchNorm(name, channels, config.norm_eps, config.batchnorm_momentum)]
    return []


def build_candidate_generator(config: CandidateGeneratorConfig) -> list[LayerSpec]:
    config.validate()
    spec: list[LayerSpec] = [
        Embedding("item_embedding", config.input_vocab_size, config.embedding_dim, field="histories"),
        MeanPoolOverSequence(lengths_field="lengths"),
    ]
    width = config.embedding_dim
    for i, hidden in enumerate(config.hidden_sizes, start=1):
        spec.append(FullyConnected(f"fc{i}", width, hidden))
        spec.extend(_norm_layer(config, f"norm{i}", hidden))
        spec.append(ReLU())
        width = hidden
    spec.append(FullyConnected("output", width, config.output_vocab_size))
    validate_model_spec(spec)
    return spec


def build_ranker(config: RankerConfig) -> list[LayerSpec]:
    config.validate()
    spec: list[LayerSpec] = [
        Embedding("user_embedding", config.num_users, config.user_dim, field="user_ids"),
        Embedding("movie_embedding", config.num_movies, config.movie_dim, field="movie_ids"),
        Embedding("genre_embedding", config.num_genres, config.genre_dim, field="genre_ids"),
        MeanPoolOverSequence(lengths_field="genre_lengths"),
        Concat(scalar_fields=("movie_age",) if config.use_movie_age else ()),
    ]
    width = config.concat_width
    for i, hidden in enumerate(config.hidden_sizes, start=1):
        spec.append(FullyConnected(f"fc{i}", width, hidden))
        spec.extend(_norm_layer(config, f"norm{i}", hidden))
        spec.append(ReLU())
        width = hidden
    spec.append(FullyConnected("output", width, config.num_classes))
    validate_model_spec(spec)
    return spec


def model_parameter_count(model_spec: list[LayerSpec]) -> int:
    return parameter_count(model_spec)


# ---------------------------------------------------------------------------
# Prediction


def predict_proba(logits: np.ndarray) -> np.ndarray:
    return softmax(logits)


def predict_top_k(logits: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest logits per row, ties broken by lower index."""
    logits = np.asarray(logits)
    n = logits.shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    # Stable sort of the negated logits keeps the lower index first on ties.
    order = np.argsort(-logits, axis=-1, kind="stable")
    return order[..., :k]


def top_k_hits(logits: np.ndarray, targets: np.ndarray, k: int) -> np.ndarray:
    """Boolean hit per row: is the target among the top-k predictions?

    Equivalent to membership in :func:`predict_top_k` output but computed by
    ranking the target directly, without sorting the full row.
    """
    logits = np.asarray(logits)
    b, n = logits.shape
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    targets = np.asarray(targets, dtype=np.int64)
    target_logit = logits[np.arange(b), targets]
    greater = (logits > target_logit[:, None]).sum(axis=1)
    cols = np.arange(n)[None, :]
    tied_lower = ((logits == target_logit[:, None]) & (cols < targets[:, None])).sum(axis=1)
    rank = greater + tied_lower
    return rank < k


def predicted_rating(logits: np.ndarray) -> np.ndarray:
    """Rating on the half-star grid of the most likely class (first on ties)."""
    return class_to_rating(np.argmax(logits, axis=-1))


# ---------------------------------------------------------------------------
# Evaluation loops


@dataclass
class CandidateGeneratorMetrics:
    top_k_accuracy: float
    k: int
    sample_count: int


@dataclass
class RankerMetrics:
    accuracy: float
    mse: float
    sample_count: int


def evaluate_candidate_generator(
    model_spec: list[LayerSpec],
    params,
    dataset,
    k: int,
    batch_size: int = 512,
    bn_state: BatchNormState | None = None,
) -> CandidateGeneratorMetrics:
    hits = 0
    total = 0
    for batch in dataset.iter_batches(batch_size):
        logits = forward(model_spec, params, batch, train=False, bn_state=bn_state)
        hits += int(top_k_hits(logits, batch.targets, k).sum())
        total += logits.shape[0]
    acc = hits / total if total else 0.0
    return CandidateGeneratorMetrics(top_k_accuracy=acc, k=k, sample_count=total)


def evaluate_ranker(
    model_spec: list[LayerSpec],
    params,
    dataset,
    batch_size: int = 512,
    bn_state: BatchNormState | None = None,
) -> RankerMetrics:
    correct = 0
    total = 0
    sq_err = 0.0
    for batch in dataset.iter_batches(batch_size):
        logits = forward(model_spec, params, batch, train=False, bn_state=bn_state)
        pred_class = np.argmax(logits, axis=-1)
        correct += int((pred_class == batch.targets).sum())
        true_rating = class_to_rating(batch.targets)
        sq_err += float(((class_to_rating(pred_class) - true_rating) ** 2).sum())
        total += logits.shape[0]
    if total == 0:
        return RankerMetrics(accuracy=0.0, mse=0.0, sample_count=0)
    return RankerMetrics(accuracy=correct / total, mse=sq_err / total, sample_count=total)
