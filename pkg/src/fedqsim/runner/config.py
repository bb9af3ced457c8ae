"""Experiment configuration: one JSON document describing a whole run.

Sections: ``data`` (corpus source and sample building), ``model`` (which
architecture and its sizes), ``federation`` (round hyperparameters),
``compression`` (transfer quantization), ``metrics`` (evaluation), plus a
``master_seed`` from which every random stream derives.

Validation reports the dotted path of the offending field together with the
violated constraint, and rejects unknown keys so typos cannot silently fall
back to defaults.  Model vocabulary sizes may be left null; they are
resolved from the corpus during preparation, and the fully resolved config
is what gets dumped next to a run's outputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from ..compression.quant import QuantConfig
from ..data.types import OrderingMode
from ..errors import ConfigurationError
from ..federation.config import Algorithm, FederationConfig
from ..nn.losses import LossKind

_LOSS_NAMES = {
    "cross_entropy": LossKind.SOFTMAX_CROSS_ENTROPY,
    "expected_rating_mse": LossKind.MEAN_SQUARED_ERROR,
    "sum_of_both": LossKind.SUM_OF_BOTH,
}
_ORDERING_NAMES = {mode.value: mode for mode in OrderingMode}
_PARTITION_KINDS = ("per_user", "iid_equal")
_MODEL_KINDS = ("candidate_generator", "ranker")
_SOURCES = ("synthetic", "movielens")
_ALGORITHMS = {"fedavg": Algorithm.FEDAVG, "fedq": Algorithm.FEDQ}


def _require_mapping(obj: Any, path: str) -> dict:
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        raise ConfigurationError(f"{path}: must be an object, got {type(obj).__name__}")
    return obj


def _check_known(obj: Mapping[str, Any], path: str, known: tuple[str, ...]) -> None:
    unknown = sorted(set(obj) - set(known))
    if unknown:
        raise ConfigurationError(
            f"{path}: unknown field(s) {unknown}; known fields are {sorted(known)}"
        )


def _get(
    obj: Mapping[str, Any],
    path: str,
    key: str,
    kind: type | tuple[type, ...],
    default: Any = ...,
    *,
    allow_none: bool = False,
) -> Any:
    if key not in obj or obj[key] is None:
        if key in obj and obj[key] is None and allow_none:
            return None
        if default is ...:
            raise ConfigurationError(f"{path}.{key}: required field is missing")
        return default
    value = obj[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is int and isinstance(value, bool):
        raise ConfigurationError(f"{path}.{key}: must be an integer, got a boolean")
    if not isinstance(value, kind):
        kind_name = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise ConfigurationError(
            f"{path}.{key}: must be {kind_name}, got {type(value).__name__}"
        )
    return value


def _positive(value: int | float, path: str) -> Any:
    if not value > 0:
        raise ConfigurationError(f"{path}: must be positive, got {value}")
    return value


def _choice(value: str, path: str, options) -> str:
    if value not in options:
        raise ConfigurationError(
            f"{path}: must be one of {sorted(options)}, got {value!r}"
        )
    return value


@dataclass(frozen=True)
class SyntheticSection:
    """Synthetic corpus generator parameters."""

    num_users: int = 2000
    num_movies: int = 500
    num_genres: int = 18
    cluster_count: int = 8
    lognormal_mu: float = 2.6
    lognormal_sigma: float = 0.85
    zipf_s: float = 1.2

    @classmethod
    def from_dict(cls, obj: Any, path: str) -> "SyntheticSection":
        obj = _require_mapping(obj, path)
        known = (
            "num_users",
            "num_movies",
            "num_genres",
            "cluster_count",
            "lognormal_mu",
            "lognormal_sigma",
            "zipf_s",
        )
        _check_known(obj, path, known)
        out = cls(
            num_users=_get(obj, path, "num_users", int, cls.num_users),
            num_movies=_get(obj, path, "num_movies", int, cls.num_movies),
            num_genres=_get(obj, path, "num_genres", int, cls.num_genres),
            cluster_count=_get(obj, path, "cluster_count", int, cls.cluster_count),
            lognormal_mu=_get(obj, path, "lognormal_mu", float, cls.lognormal_mu),
            lognormal_sigma=_get(obj, path, "lognormal_sigma", float, cls.lognormal_sigma),
            zipf_s=_get(obj, path, "zipf_s", float, cls.zipf_s),
        )
        for name in ("num_users", "num_movies", "num_genres", "cluster_count"):
            _positive(getattr(out, name), f"{path}.{name}")
        _positive(out.lognormal_sigma, f"{path}.lognormal_sigma")
        _positive(out.zipf_s, f"{path}.zipf_s")
        return out

    def to_dict(self) -> dict:
        return {
            "num_users": self.num_users,
            "num_movies": self.num_movies,
            "num_genres": self.num_genres,
            "cluster_count": self.cluster_count,
            "lognormal_mu": self.lognormal_mu,
            "lognormal_sigma": self.lognormal_sigma,
            "zipf_s": self.zipf_s,
        }


@dataclass(frozen=True)
class MovieLensSection:
    """File locations for a ratings-file corpus."""

    ratings_path: str
    movies_path: str
    release_years_path: str | None = None

    @classmethod
    def from_dict(cls, obj: Any, path: str) -> "MovieLensSection":
        obj = _require_mapping(obj, path)
        _check_known(obj, path, ("ratings_path", "movies_path", "release_years_path"))
        return cls(
            ratings_path=_get(obj, path, "ratings_path", str),
            movies_path=_get(obj, path, "movies_path", str),
            release_years_path=_get(
                obj, path, "release_years_path", str, None, allow_none=True
            ),
        )

    def to_dict(self) -> dict:
        return {
            "ratings_path": self.ratings_path,
            "movies_path": self.movies_path,
            "release_years_path": self.release_years_path,
        }


@dataclass(frozen=True)
class DataSection:
    """Corpus source, sample construction, split, and partitioning."""

    source: str = "synthetic"
    synthetic: SyntheticSection = field(default_factory=SyntheticSection)
    movielens: MovieLensSection | None = None
    window: int = 7
    ordering: OrderingMode = OrderingMode.TIMESTAMP_ASC
    train_fraction: float = 0.9
    partition: str = "per_user"
    iid_clients: int = 100

    @classmethod
    def from_dict(cls, obj: Any, path: str) -> "DataSection":
        obj = _require_mapping(obj, path)
        known = (
            "source",
            "synthetic",
            "movielens",
            "window",
            "ordering",
            "train_fraction",
            "partition",
            "iid_clients",
        )
        _check_known(obj, path, known)
        source = _choice(_get(obj, path, "source", str, cls.source), f"{path}.source", _SOURCES)
        movielens = None
        if "movielens" in obj and obj["movielens"] is not None:
            movielens = MovieLensSection.from_dict(obj["movielens"], f"{path}.movielens")
        if source == "movielens" and movielens is None:
            raise ConfigurationError(
                f"{path}.movielens: required when source is 'movielens'"
            )
        ordering_name = _choice(
            _get(obj, path, "ordering", str, cls.ordering.value),
            f"{path}.ordering",
            _ORDERING_NAMES,
        )
        out = cls(
            source=source,
            synthetic=SyntheticSection.from_dict(obj.get("synthetic"), f"{path}.synthetic"),
            movielens=movielens,
            window=_get(obj, path, "window", int, cls.window),
            ordering=_ORDERING_NAMES[ordering_name],
            train_fraction=_get(obj, path, "train_fraction", float, cls.train_fraction),
            partition=_choice(
                _get(obj, path, "partition", str, cls.partition),
                f"{path}.partition",
                _PARTITION_KINDS,
            ),
            iid_clients=_get(obj, path, "iid_clients", int, cls.iid_clients),
        )
        _positive(out.window, f"{path}.window")
        _positive(out.iid_clients, f"{path}.iid_clients")
        if not 0.0 < out.train_fraction < 1.0:
            raise ConfigurationError(
                f"{path}.train_fraction: must lie strictly between 0 and 1, "
                f"got {out.train_fraction}"
            )
        return out

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "synthetic": self.synthetic.to_dict(),
            "movielens": self.movielens.to_dict() if self.movielens else None,
            "window": self.window,
            "ordering": self.ordering.value,
            "train_fraction": self.train_fraction,
            "partition": self.partition,
            "iid_clients": self.iid_clients,
        }


@dataclass(frozen=True)
class ModelSection:
    """Architecture choice plus its hyperparameters.

    Vocabulary and id-space sizes (``input_vocab_size``, ``num_users``, ...)
    may stay ``None`` in the file; preparation fills them from the corpus.
    """

    kind: str = "candidate_generator"
    loss: LossKind = LossKind.SOFTMAX_CROSS_ENTROPY
    embedding_dim: int = 64
    hidden_sizes: tuple[int, ...] = (1024, 512, 256)
    norm: str = "group"
    groupnorm_groups: int = 32
    norm_eps: float = 1e-5
    batchnorm_momentum: float = 0.1
    input_vocab_size: int | None = None
    output_vocab_size: int | None = None
    user_dim: int = 32
    movie_dim: int = 128
    genre_dim: int = 16
    use_movie_age: bool = True
    num_users: int | None = None
    num_movies: int | None = None
    num_genres: int | None = None

    @classmethod
    def from_dict(cls, obj: Any, path: str) -> "ModelSection":
        obj = _require_mapping(obj, path)
        known = (
            "kind",
            "loss",
            "embedding_dim",
            "hidden_sizes",
            "norm",
            "groupnorm_groups",
            "norm_eps",
            "batchnorm_momentum",
            "input_vocab_size",
            "output_vocab_size",
            "user_dim",
            "movie_dim",
            "genre_dim",
            "use_movie_age",
            "num_users",
            "num_movies",
            "num_genres",
        )
        _check_known(obj, path, known)
        kind = _choice(_get(obj, path, "kind", str, cls.kind), f"{path}.kind", _MODEL_KINDS)
        loss_name = _choice(
            _get(obj, path, "loss", str, "cross_entropy"), f"{path}.loss", _LOSS_NAMES
        )
        hidden_raw = _get(
            obj, path, "hidden_sizes", list,
            list(cls.hidden_sizes if kind == "candidate_generator" else (256,)),
        )
        if not all(isinstance(h, int) and not isinstance(h, bool) and h > 0 for h in hidden_raw):
            raise ConfigurationError(
                f"{path}.hidden_sizes: must be a list of positive integers, got {hidden_raw}"
            )
        out = cls(
            kind=kind,
            loss=_LOSS_NAMES[loss_name],
            embedding_dim=_get(obj, path, "embedding_dim", int, cls.embedding_dim),
            hidden_sizes=tuple(hidden_raw),
            norm=_choice(
                _get(obj, path, "norm", str, cls.norm),
                f"{path}.norm",
                ("group", "batch", "none"),
            ),
            groupnorm_groups=_get(obj, path, "groupnorm_groups", int, cls.groupnorm_groups),
            norm_eps=_get(obj, path, "norm_eps", float, cls.norm_eps),
            batchnorm_momentum=_get(obj, path, "batchnorm_momentum", float, cls.batchnorm_momentum),
            input_vocab_size=_get(obj, path, "input_vocab_size", int, None, allow_none=True),
            output_vocab_size=_get(obj, path, "output_vocab_size", int, None, allow_none=True),
            user_dim=_get(obj, path, "user_dim", int, cls.user_dim),
            movie_dim=_get(obj, path, "movie_dim", int, cls.movie_dim),
            genre_dim=_get(obj, path, "genre_dim", int, cls.genre_dim),
            use_movie_age=_get(obj, path, "use_movie_age", bool, cls.use_movie_age),
            num_users=_get(obj, path, "num_users", int, None, allow_none=True),
            num_movies=_get(obj, path, "num_movies", int, None, allow_none=True),
            num_genres=_get(obj, path, "num_genres", int, None, allow_none=True),
        )
        for name in ("embedding_dim", "groupnorm_groups", "user_dim", "movie_dim", "genre_dim"):
            _positive(getattr(out, name), f"{path}.{name}")
        _positive(out.norm_eps, f"{path}.norm_eps")
        return out

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "loss": next(k for k, v in _LOSS_NAMES.items() if v is self.loss),
            "embedding_dim": self.embedding_dim,
            "hidden_sizes": list(self.hidden_sizes),
            "norm": self.norm,
            "groupnorm_groups": self.groupnorm_groups,
            "norm_eps": self.norm_eps,
            "batchnorm_momentum": self.batchnorm_momentum,
            "input_vocab_size": self.input_vocab_size,
            "output_vocab_size": self.output_vocab_size,
            "user_dim": self.user_dim,
            "movie_dim": self.movie_dim,
            "genre_dim": self.genre_dim,
            "use_movie_age": self.use_movie_age,
            "num_users": self.num_users,
            "num_movies": self.num_movies,
            "num_genres": self.num_genres,
        }


@dataclass(frozen=True)
class CompressionSection:
    """Whether transfers are compressed, and with what quantization."""

    enabled: bool = False
    quant: QuantConfig = field(default_factory=QuantConfig)

    @classmethod
    def from_dict(cls, obj: Any, path: str) -> "CompressionSection":
        obj = _require_mapping(obj, path)
        _check_known(obj, path, ("enabled", "qp", "f_qp", "per_tensor_qp_offset", "strict_literal"))
        offsets_raw = _require_mapping(
            obj.get("per_tensor_qp_offset"), f"{path}.per_tensor_qp_offset"
        )
        for key, value in offsets_raw.items():
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigurationError(
                    f"{path}.per_tensor_qp_offset.{key}: must be an integer, "
                    f"got {type(value).__name__}"
                )
        quant = QuantConfig(
            qp=_get(obj, path, "qp", int, QuantConfig.qp),
            f_qp=_get(obj, path, "f_qp", int, QuantConfig.f_qp),
            per_tensor_qp_offset=dict(offsets_raw),
            strict_literal=_get(obj, path, "strict_literal", bool, False),
        )
        try:
            quant.validate()
        except ConfigurationError as exc:
            raise ConfigurationError(f"{path}: {exc}") from exc
        return cls(enabled=_get(obj, path, "enabled", bool, cls.enabled), quant=quant)

    def to_dict(self) -> dict:
        return {
            "enabled": self.enabled,
            "qp": self.quant.qp,
            "f_qp": self.quant.f_qp,
            "per_tensor_qp_offset": dict(self.quant.per_tensor_qp_offset),
            "strict_literal": self.quant.strict_literal,
        }


@dataclass(frozen=True)
class MetricsSection:
    """Evaluation settings: ranked-list depth and cadence."""

    top_k: int = 100
    eval_every: int = 1

    @classmethod
    def from_dict(cls, obj: Any, path: str) -> "MetricsSection":
        obj = _require_mapping(obj, path)
        _check_known(obj, path, ("top_k", "eval_every"))
        out = cls(
            top_k=_get(obj, path, "top_k", int, cls.top_k),
            eval_every=_get(obj, path, "eval_every", int, cls.eval_every),
        )
        _positive(out.top_k, f"{path}.top_k")
        _positive(out.eval_every, f"{path}.eval_every")
        return out

    def to_dict(self) -> dict:
        return {"top_k": self.top_k, "eval_every": self.eval_every}


def _federation_from_dict(obj: Any, path: str, master_seed: int) -> FederationConfig:
    obj = _require_mapping(obj, path)
    known = (
        "algorithm",
        "rounds",
        "clients_per_round",
        "queue_length",
        "local_epochs",
        "batch_size",
        "learning_rate",
        "seed",
    )
    _check_known(obj, path, known)
    algorithm_name = _choice(
        _get(obj, path, "algorithm", str, "fedavg"), f"{path}.algorithm", _ALGORITHMS
    )
    cfg = FederationConfig(
        algorithm=_ALGORITHMS[algorithm_name],
        rounds=_get(obj, path, "rounds", int, 10),
        clients_per_round=_get(obj, path, "clients_per_round", int, 10),
        queue_length=_get(obj, path, "queue_length", int, 1),
        local_epochs=_get(obj, path, "local_epochs", int, 1),
        batch_size=_get(obj, path, "batch_size", int, 16),
        learning_rate=_get(obj, path, "learning_rate", float, 0.1),
        seed=_get(obj, path, "seed", int, master_seed),
    )
    try:
        cfg.validate()
    except ConfigurationError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    return cfg


def _federation_to_dict(cfg: FederationConfig) -> dict:
    return {
        "algorithm": cfg.algorithm.value,
        "rounds": cfg.rounds,
        "clients_per_round": cfg.clients_per_round,
        "queue_length": cfg.queue_length,
        "local_epochs": cfg.local_epochs,
        "batch_size": cfg.batch_size,
        "learning_rate": cfg.learning_rate,
        "seed": cfg.seed,
    }


@dataclass(frozen=True)
class ExperimentConfig:
    """The whole experiment: one model, one corpus, one protocol, one seed."""

    master_seed: int = 0
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    federation: FederationConfig = field(
        default_factory=lambda: _federation_from_dict({}, "federation", 0)
    )
    compression: CompressionSection = field(default_factory=CompressionSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)

    @classmethod
    def from_dict(cls, obj: Any) -> "ExperimentConfig":
        obj = _require_mapping(obj, "config")
        _check_known(
            obj,
            "config",
            ("master_seed", "data", "model", "federation", "compression", "metrics"),
        )
        master_seed = _get(obj, "config", "master_seed", int, 0)
        if master_seed < 0:
            raise ConfigurationError(
                f"config.master_seed: must be non-negative, got {master_seed}"
            )
        return cls(
            master_seed=master_seed,
            data=DataSection.from_dict(obj.get("data"), "data"),
            model=ModelSection.from_dict(obj.get("model"), "model"),
            federation=_federation_from_dict(obj.get("federation"), "federation", master_seed),
            compression=CompressionSection.from_dict(obj.get("compression"), "compression"),
            metrics=MetricsSection.from_dict(obj.get("metrics"), "metrics"),
        )

    def to_dict(self) -> dict:
        return {
            "master_seed": self.master_seed,
            "data": self.data.to_dict(),
            "model": self.model.to_dict(),
            "federation": _federation_to_dict(self.federation),
            "compression": self.compression.to_dict(),
            "metrics": self.metrics.to_dict(),
        }

    def dump_resolved(self, path: str | Path) -> None:
        """Writes the defaults-expanded config so results are self-describing."""
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n",
            encoding="utf-8",
        )


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Applies ``dotted.path=value`` overrides to a raw config dict.

    Values parse as JSON where possible (numbers, booleans, lists) and fall
    back to plain strings.  Intermediate objects are created as needed; the
    result still passes full validation afterwards.
    """
    out = json.loads(json.dumps(raw))
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(
                f"override {item!r}: expected dotted.path=value"
            )
        dotted, _, text = item.partition("=")
        keys = [k for k in dotted.strip().split(".") if k]
        if not keys:
            raise ConfigurationError(f"override {item!r}: empty field path")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = out
        for key in keys[:-1]:
            nxt = node.get(key)
            if nxt is None:
                nxt = {}
                node[key] = nxt
            if not isinstance(nxt, dict):
                raise ConfigurationError(
                    f"override {item!r}: {key} is not an object"
                )
            node = nxt
        node[keys[-1]] = value
    return out


def load_config(
    path: str | Path,
    *,
    overrides: list[str] | None = None,
    seed: int | None = None,
) -> ExperimentConfig:
    """Reads, overrides, and validates a config file.

    ``seed`` replaces ``master_seed`` (and the federation seed follows it
    unless the file pins one explicitly).
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
    if overrides:
        raw = apply_overrides(raw, overrides)
    if seed is not None:
        if seed < 0:
            raise ConfigurationError(f"--seed: must be non-negative, got {seed}")
        raw = dict(raw)
        raw["master_seed"] = seed
    return ExperimentConfig.from_dict(raw)
