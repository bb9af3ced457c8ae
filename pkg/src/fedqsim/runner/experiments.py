"""Workflow orchestration behind the CLI subcommands.

Each workflow resolves the experiment config into concrete data, model,
and protocol objects, runs, and writes self-describing artifacts into an
output directory: the fully resolved config, deterministic metric JSONL,
the final model, and a wall-time sidecar (timing stays out of the metric
files so those remain byte-reproducible).
"""

from __future__ import annotations

import dataclasses
import json
import platform
import time
from pathlib import Path

import numpy as np

from ..compression.analytics import (
    space_saving,
    uncompressed_wire_bytes,
    weight_entropy,
)
from ..compression.codec import (
    CompressedTransport,
    compress_parameter_set,
    decompress_parameter_set,
)
from ..compression.quant import QuantConfig, quantize
from ..data.movielens import load_interactions
from ..data.partition import (
    ClientPartition,
    partition_by_user,
    partition_iid,
    save_partition,
    train_val_split,
)
from ..data.samples import (
    build_rating_samples,
    build_watch_histories,
    save_dataset,
)
from ..data.stats import dataset_stats
from ..data.synthetic import generate_synthetic
from ..data.types import InteractionTable, MovieTable, OrderingMode, RemapTables
from ..errors import ConfigurationError
from ..federation.simulator import PlainTransport, run_training
from ..metrics import MetricSeries
from ..models import (
    CandidateGeneratorConfig,
    RankerConfig,
    build_candidate_generator,
    build_ranker,
    evaluate_candidate_generator,
    evaluate_ranker,
)
from ..nn.network import BatchNormState, parameter_count
from ..nn.params import ParameterSet, load_parameter_set, save_parameter_set
from ..seeds import substream
from .central import train_central
from .config import ExperimentConfig, ModelSection

DEFAULT_SWEEP_QPS = (-48, -43, -38, -30, -24)


def build_corpus(
    cfg: ExperimentConfig,
) -> tuple[InteractionTable, MovieTable, RemapTables | None]:
    """Loads or generates the interaction corpus named by the data section."""
    data = cfg.data
    if data.source == "synthetic":
        s = data.synthetic
        interactions, movies = generate_synthetic(
            num_users=s.num_users,
            num_movies=s.num_movies,
            num_genres=s.num_genres,
            cluster_count=s.cluster_count,
            lognormal_mu=s.lognormal_mu,
            lognormal_sigma=s.lognormal_sigma,
            zipf_s=s.zipf_s,
            seed=cfg.master_seed,
        )
        return interactions, movies, None
    ml = data.movielens
    interactions, movies, remap = load_interactions(
        ml.ratings_path, ml.movies_path, ml.release_years_path
    )
    return interactions, movies, remap


def resolve_model_section(
    section: ModelSection, interactions: InteractionTable, movies: MovieTable
) -> ModelSection:
    """Fills corpus-dependent sizes (vocabulary, id spaces) left as null."""
    updates: dict = {}
    if section.kind == "candidate_generator":
        output = section.output_vocab_size
        if output is None:
            output = interactions.num_movies
        elif output < interactions.num_movies:
            raise ConfigurationError(
                f"model.output_vocab_size: {output} is smaller than the corpus "
                f"movie count {interactions.num_movies}"
            )
        updates["output_vocab_size"] = output
        updates["input_vocab_size"] = (
            section.input_vocab_size
            if section.input_vocab_size is not None
            else output + 1
        )
    else:
        updates["num_users"] = (
            section.num_users
            if section.num_users is not None
            else interactions.num_users
        )
        updates["num_movies"] = (
            section.num_movies
            if section.num_movies is not None
            else interactions.num_movies
        )
        updates["num_genres"] = (
            section.num_genres
            if section.num_genres is not None
            else len(movies.genre_names)
        )
    return dataclasses.replace(section, **updates)


def model_from_section(section: ModelSection):
    """(model_spec, loss_kind) for a fully resolved model section."""
    if section.kind == "candidate_generator":
        if section.input_vocab_size is None or section.output_vocab_size is None:
            raise ConfigurationError(
                "model: vocabulary sizes are unresolved; prepare the corpus first"
            )
        model_cfg = CandidateGeneratorConfig(
            input_vocab_size=section.input_vocab_size,
            output_vocab_size=section.output_vocab_size,
            embedding_dim=section.embedding_dim,
            hidden_sizes=section.hidden_sizes,
            norm=section.norm,
            groupnorm_groups=section.groupnorm_groups,
            norm_eps=section.norm_eps,
            batchnorm_momentum=section.batchnorm_momentum,
        )
        return build_candidate_generator(model_cfg), section.loss
    if section.num_users is None or section.num_movies is None or section.num_genres is None:
        raise ConfigurationError(
            "model: id-space sizes are unresolved; prepare the corpus first"
        )
    model_cfg = RankerConfig(
        num_users=section.num_users,
        num_movies=section.num_movies,
        num_genres=section.num_genres,
        user_dim=section.user_dim,
        movie_dim=section.movie_dim,
        genre_dim=section.genre_dim,
        hidden_sizes=section.hidden_sizes,
        use_movie_age=section.use_movie_age,
        norm=section.norm,
        groupnorm_groups=section.groupnorm_groups,
        norm_eps=section.norm_eps,
        batchnorm_momentum=section.batchnorm_momentum,
    )
    return build_ranker(model_cfg), section.loss


@dataclasses.dataclass
class PreparedExperiment:
    """Everything a workflow needs, resolved from one config."""

    config: ExperimentConfig
    interactions: InteractionTable
    movies: MovieTable
    remap: RemapTables | None
    train_dataset: object
    val_dataset: object
    partition: ClientPartition
    model_spec: list
    loss_kind: object

    def make_eval_fn(self):
        """Validation-split evaluator keyed by the model kind's metrics."""
        cfg = self.config
        if cfg.model.kind == "candidate_generator":
            def eval_fn(params: ParameterSet, bn_state: BatchNormState | None = None):
                m = evaluate_candidate_generator(
                    self.model_spec,
                    params,
                    self.val_dataset,
                    k=cfg.metrics.top_k,
                    bn_state=bn_state,
                )
                return {"top_k_accuracy": m.top_k_accuracy}
        else:
            def eval_fn(params: ParameterSet, bn_state: BatchNormState | None = None):
                m = evaluate_ranker(
                    self.model_spec, params, self.val_dataset, bn_state=bn_state
                )
                return {"accuracy": m.accuracy, "mse": m.mse}
        return eval_fn


def prepare_experiment(cfg: ExperimentConfig) -> PreparedExperiment:
    """Corpus, samples, split, partition, and model for one config."""
    interactions, movies, remap = build_corpus(cfg)
    data = cfg.data
    if cfg.model.kind == "candidate_generator":
        dataset = build_watch_histories(
            interactions,
            window=data.window,
            ordering=data.ordering,
            rng=substream(cfg.master_seed, "ordering")
            if data.ordering is OrderingMode.RANDOM
            else None,
        )
    else:
        dataset = build_rating_samples(
            interactions, movies, use_movie_age=cfg.model.use_movie_age
        )
    train, val = train_val_split(
        dataset, data.train_fraction, substream(cfg.master_seed, "split")
    )
    if data.partition == "per_user":
        partition = partition_by_user(train)
    else:
        partition = partition_iid(
            len(train), data.iid_clients, substream(cfg.master_seed, "partition")
        )
    model_section = resolve_model_section(cfg.model, interactions, movies)
    resolved = dataclasses.replace(cfg, model=model_section)
    model_spec, loss_kind = model_from_section(model_section)
    if cfg.model.kind == "candidate_generator" and cfg.metrics.top_k > model_section.output_vocab_size:
        raise ConfigurationError(
            f"metrics.top_k: {cfg.metrics.top_k} exceeds the "
            f"{model_section.output_vocab_size}-movie vocabulary"
        )
    return PreparedExperiment(
        config=resolved,
        interactions=interactions,
        movies=movies,
        remap=remap,
        train_dataset=train,
        val_dataset=val,
        partition=partition,
        model_spec=model_spec,
        loss_kind=loss_kind,
    )


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _run_info(wall_seconds: float, series: MetricSeries | None = None) -> dict:
    info = {
        "wall_seconds_total": wall_seconds,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    if series is not None:
        info["wall_seconds_per_round"] = [r.wall_seconds for r in series.records]
    return info


def corpus_stats(cfg: ExperimentConfig) -> dict:
    """Corpus summary for the stats subcommand."""
    interactions, movies, remap = build_corpus(cfg)
    stats = dataset_stats(interactions).to_dict()
    stats["movie_table_size"] = len(movies)
    stats["genre_vocabulary"] = list(movies.genre_names)
    if remap is not None:
        stats["unrated_movie_count"] = remap.unrated_movie_count
    return stats


def run_prepare_data(cfg: ExperimentConfig, out_dir: str | Path) -> dict:
    """Builds and saves datasets, the partition, and corpus stats."""
    t0 = time.monotonic()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prepared = prepare_experiment(cfg)
    prepared.config.dump_resolved(out / "config.resolved.json")
    save_dataset(prepared.train_dataset, out / "train.fqd")
    save_dataset(prepared.val_dataset, out / "val.fqd")
    save_partition(prepared.partition, out / "partition.fqp")
    stats = dataset_stats(prepared.interactions).to_dict()
    _write_json(out / "stats.json", stats)
    if prepared.remap is not None:
        _write_json(out / "remap.json", prepared.remap.to_dict())
    summary = {
        "train_samples": len(prepared.train_dataset),
        "val_samples": len(prepared.val_dataset),
        "clients": len(prepared.partition.assignments),
        "interactions": len(prepared.interactions),
    }
    _write_json(out / "run_info.json", {**_run_info(time.monotonic() - t0), **summary})
    return summary


def run_train_federated(
    cfg: ExperimentConfig,
    out_dir: str | Path,
    *,
    checkpoint_every: int = 0,
    resume: bool = False,
) -> MetricSeries:
    """Federated run with artifacts: metrics, final model, resolved config."""
    t0 = time.monotonic()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prepared = prepare_experiment(cfg)
    prepared.config.dump_resolved(out / "config.resolved.json")
    if cfg.compression.enabled:
        transport = CompressedTransport(cfg.compression.quant)
    else:
        transport = PlainTransport()
    eval_fn = prepared.make_eval_fn()
    params, series = run_training(
        prepared.model_spec,
        prepared.loss_kind,
        cfg.federation,
        prepared.train_dataset,
        prepared.partition,
        eval_fn=lambda p: eval_fn(p, None),
        transport=transport,
        eval_every=cfg.metrics.eval_every,
        checkpoint_dir=out / "checkpoints" if checkpoint_every > 0 else None,
        checkpoint_every=checkpoint_every,
        resume=resume,
    )
    series.save_jsonl(out / "metrics.jsonl")
    save_parameter_set(params, out / "final_model.fqs")
    _write_json(out / "run_info.json", _run_info(time.monotonic() - t0, series))
    return series


def run_train_central(cfg: ExperimentConfig, out_dir: str | Path) -> MetricSeries:
    """Central baseline; federation hyperparameters double as epoch settings.

    ``federation.rounds`` is the epoch count, ``federation.batch_size`` and
    ``federation.learning_rate`` apply directly; queue settings are ignored.
    """
    t0 = time.monotonic()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prepared = prepare_experiment(cfg)
    prepared.config.dump_resolved(out / "config.resolved.json")
    eval_fn = prepared.make_eval_fn()
    params, bn_state, series = train_central(
        prepared.model_spec,
        prepared.loss_kind,
        prepared.train_dataset,
        epochs=cfg.federation.rounds,
        batch_size=cfg.federation.batch_size,
        learning_rate=cfg.federation.learning_rate,
        master_seed=cfg.federation.seed,
        eval_fn=eval_fn,
        eval_every=cfg.metrics.eval_every,
    )
    series.save_jsonl(out / "metrics.jsonl")
    save_parameter_set(params, out / "final_model.fqs")
    if bn_state is not None and bn_state.stats:
        save_parameter_set(bn_state.to_parameter_set(), out / "final_model_norm_stats.fqs")
    _write_json(out / "run_info.json", _run_info(time.monotonic() - t0, series))
    return series


def evaluate_model_at_qp(
    prepared: PreparedExperiment, params: ParameterSet, qp: int, base_quant: QuantConfig
) -> dict:
    """One sweep point: compress the model at this QP, evaluate the result."""
    quant = dataclasses.replace(base_quant, qp=qp)
    blob = compress_parameter_set(params, quant)
    restored = decompress_parameter_set(blob)
    eval_fn = prepared.make_eval_fn()
    metrics = eval_fn(restored, None)
    tensors = [
        quantize(array, quant.step_size_for(name), name=name, qp=quant.effective_qp(name))
        for name, array in params
    ]
    baseline_bytes = uncompressed_wire_bytes(params.total_count())
    return {
        "qp": qp,
        "compressed_bytes": len(blob),
        "uncompressed_bytes": baseline_bytes,
        "space_saving": space_saving(baseline_bytes, len(blob)),
        "weight_entropy_bits": weight_entropy(tensors),
        **metrics,
    }


def run_compress_eval(
    cfg: ExperimentConfig,
    out_dir: str | Path,
    *,
    model_path: str | Path | None = None,
    qps: tuple[int, ...] | None = None,
) -> list[dict]:
    """Post-training QP sweep: bytes, space saving, entropy, and metrics per QP.

    The model comes from ``model_path`` (a saved parameter file) or, when
    omitted, from running the config's federated training first.  The first
    emitted record is the uncompressed baseline (``qp`` null).
    """
    t0 = time.monotonic()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sweep = tuple(qps) if qps else DEFAULT_SWEEP_QPS
    prepared = prepare_experiment(cfg)
    prepared.config.dump_resolved(out / "config.resolved.json")
    if model_path is not None:
        params = load_parameter_set(model_path)
        expected = {name: shape for name, shape in _spec_shapes(prepared)}
        actual = {name: a.shape for name, a in params}
        if actual != expected:
            raise ConfigurationError(
                f"model file {model_path} does not match the configured "
                f"architecture ({parameter_count(prepared.model_spec)} parameters expected)"
            )
    else:
        eval_fn = prepared.make_eval_fn()
        params, _ = run_training(
            prepared.model_spec,
            prepared.loss_kind,
            cfg.federation,
            prepared.train_dataset,
            prepared.partition,
            eval_fn=lambda p: eval_fn(p, None),
            eval_every=cfg.metrics.eval_every,
        )
    eval_fn = prepared.make_eval_fn()
    baseline = {
        "qp": None,
        "compressed_bytes": uncompressed_wire_bytes(params.total_count()),
        "uncompressed_bytes": uncompressed_wire_bytes(params.total_count()),
        "space_saving": 0.0,
        **eval_fn(params.rounded_to_float32(), None),
    }
    records = [baseline]
    for qp in sweep:
        records.append(
            evaluate_model_at_qp(prepared, params, qp, cfg.compression.quant)
        )
    lines = "".join(
        json.dumps(rec, separators=(",", ":"), sort_keys=False) + "\n"
        for rec in records
    )
    (out / "compress_eval.jsonl").write_bytes(lines.encode("utf-8"))
    _write_json(out / "run_info.json", _run_info(time.monotonic() - t0))
    return records


def _spec_shapes(prepared: PreparedExperiment):
    from ..nn.network import param_shapes

    return param_shapes(prepared.model_spec).items()
