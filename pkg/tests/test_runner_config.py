"""Experiment config parsing: defaults, constraints, overrides, round trips."""

from __future__ import annotations

import json

import pytest

from fedqsim.data.types import OrderingMode
from fedqsim.errors import ConfigurationError
from fedqsim.federation.config import Algorithm
from fedqsim.nn.losses import LossKind
from fedqsim.runner.config import (
    ExperimentConfig,
    apply_overrides,
    load_config,
)


def config_file(tmp_path, obj, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return path


def test_empty_config_gets_defaults():
    cfg = ExperimentConfig.from_dict({})
    assert cfg.master_seed == 0
    assert cfg.data.source == "synthetic"
    assert cfg.data.window == 7
    assert cfg.data.ordering is OrderingMode.TIMESTAMP_ASC
    assert cfg.data.train_fraction == 0.9
    assert cfg.data.partition == "per_user"
    assert cfg.model.kind == "candidate_generator"
    assert cfg.model.loss is LossKind.SOFTMAX_CROSS_ENTROPY
    assert cfg.model.input_vocab_size is None
    assert cfg.federation.algorithm is Algorithm.FEDAVG
    assert cfg.federation.queue_length == 1
    assert cfg.federation.seed == 0
    assert cfg.compression.enabled is False
    assert cfg.compression.quant.qp == -30
    assert cfg.metrics.top_k == 100


def test_federation_seed_follows_master_seed():
    cfg = ExperimentConfig.from_dict({"master_seed": 17})
    assert cfg.federation.seed == 17
    pinned = ExperimentConfig.from_dict(
        {"master_seed": 17, "federation": {"seed": 4}}
    )
    assert pinned.federation.seed == 4


def test_unknown_keys_rejected_with_dotted_paths():
    with pytest.raises(ConfigurationError, match="config: unknown"):
        ExperimentConfig.from_dict({"tpyo": 1})
    with pytest.raises(ConfigurationError, match="data: unknown"):
        ExperimentConfig.from_dict({"data": {"windw": 7}})
    with pytest.raises(ConfigurationError, match="data.synthetic: unknown"):
        ExperimentConfig.from_dict({"data": {"synthetic": {"users": 5}}})
    with pytest.raises(ConfigurationError, match="model: unknown"):
        ExperimentConfig.from_dict({"model": {"depth": 3}})
    with pytest.raises(ConfigurationError, match="federation: unknown"):
        ExperimentConfig.from_dict({"federation": {"lr": 0.1}})
    with pytest.raises(ConfigurationError, match="compression: unknown"):
        ExperimentConfig.from_dict({"compression": {"level": 9}})
    with pytest.raises(ConfigurationError, match="metrics: unknown"):
        ExperimentConfig.from_dict({"metrics": {"k": 10}})


def test_constraint_messages_name_the_field():
    cases = [
        ({"master_seed": -1}, "config.master_seed"),
        ({"data": {"window": 0}}, "data.window"),
        ({"data": {"train_fraction": 1.0}}, "data.train_fraction"),
        ({"data": {"source": "csv"}}, "data.source"),
        ({"data": {"source": "movielens"}}, "data.movielens"),
        ({"data": {"ordering": "sideways"}}, "data.ordering"),
        ({"data": {"partition": "dirichlet"}}, "data.partition"),
        ({"data": {"iid_clients": 0}}, "data.iid_clients"),
        ({"data": {"synthetic": {"num_users": 0}}}, "data.synthetic.num_users"),
        ({"data": {"synthetic": {"zipf_s": -1}}}, "data.synthetic.zipf_s"),
        ({"model": {"kind": "transformer"}}, "model.kind"),
        ({"model": {"loss": "hinge"}}, "model.loss"),
        ({"model": {"hidden_sizes": [64, 0]}}, "model.hidden_sizes"),
        ({"model": {"hidden_sizes": [64, "a"]}}, "model.hidden_sizes"),
        ({"model": {"embedding_dim": -4}}, "model.embedding_dim"),
        ({"model": {"norm": "instance"}}, "model.norm"),
        ({"model": {"norm_eps": 0}}, "model.norm_eps"),
        ({"federation": {"algorithm": "gossip"}}, "federation.algorithm"),
        ({"federation": {"rounds": "ten"}}, "federation.rounds"),
        ({"federation": {"batch_size": 0}}, "federation"),
        ({"federation": {"learning_rate": 0}}, "federation"),
        ({"federation": {"algorithm": "fedavg", "queue_length": 2}}, "federation"),
        ({"federation": {"algorithm": "fedq", "queue_length": 3,
                         "clients_per_round": 10}}, "federation"),
        ({"compression": {"qp": "low"}}, "compression.qp"),
        ({"compression": {"f_qp": -1}}, "compression"),
        ({"compression": {"per_tensor_qp_offset": {"w": 1.5}}},
         "compression.per_tensor_qp_offset.w"),
        ({"metrics": {"top_k": 0}}, "metrics.top_k"),
        ({"metrics": {"eval_every": 0}}, "metrics.eval_every"),
    ]
    for obj, needle in cases:
        with pytest.raises(ConfigurationError) as err:
            ExperimentConfig.from_dict(obj)
        assert needle in str(err.value), f"{obj}: {err.value}"


def test_booleans_are_not_integers():
    with pytest.raises(ConfigurationError, match="boolean"):
        ExperimentConfig.from_dict({"data": {"window": True}})


def test_round_trip_through_dict():
    obj = {
        "master_seed": 3,
        "data": {"source": "synthetic", "window": 5, "ordering": "random",
                 "train_fraction": 0.8, "partition": "iid_equal", "iid_clients": 12},
        "model": {"kind": "ranker", "loss": "sum_of_both", "hidden_sizes": [32],
                  "user_dim": 8, "movie_dim": 16, "genre_dim": 4,
                  "use_movie_age": False},
        "federation": {"algorithm": "fedq", "rounds": 4, "clients_per_round": 6,
                       "queue_length": 3, "local_epochs": 2, "batch_size": 8,
                       "learning_rate": 0.05},
        "compression": {"enabled": True, "qp": -24,
                        "per_tensor_qp_offset": {"fc1.weight": 4}},
        "metrics": {"top_k": 20, "eval_every": 2},
    }
    cfg = ExperimentConfig.from_dict(obj)
    assert cfg.model.loss is LossKind.SUM_OF_BOTH
    assert cfg.data.ordering is OrderingMode.RANDOM
    assert cfg.federation.seed == 3
    again = ExperimentConfig.from_dict(cfg.to_dict())
    assert again == cfg
    assert again.to_dict() == cfg.to_dict()


def test_dump_resolved_is_loadable(tmp_path):
    cfg = ExperimentConfig.from_dict({"master_seed": 9})
    out = tmp_path / "resolved.json"
    cfg.dump_resolved(out)
    reloaded = ExperimentConfig.from_dict(json.loads(out.read_text()))
    assert reloaded == cfg


def test_apply_overrides():
    raw = {"federation": {"rounds": 2}}
    out = apply_overrides(raw, [
        "federation.rounds=7",
        "federation.learning_rate=0.5",
        "data.partition=iid_equal",
        "model.hidden_sizes=[16, 8]",
        "compression.enabled=true",
    ])
    assert out["federation"]["rounds"] == 7
    assert out["federation"]["learning_rate"] == 0.5
    assert out["data"]["partition"] == "iid_equal"       # string fallback
    assert out["model"]["hidden_sizes"] == [16, 8]
    assert out["compression"]["enabled"] is True
    assert raw == {"federation": {"rounds": 2}}          # input untouched
    with pytest.raises(ConfigurationError, match="dotted.path=value"):
        apply_overrides({}, ["no_equals_sign"])
    with pytest.raises(ConfigurationError, match="empty field path"):
        apply_overrides({}, ["=5"])
    with pytest.raises(ConfigurationError, match="not an object"):
        apply_overrides({"data": {"window": 7}}, ["data.window.deep=1"])


def test_load_config(tmp_path):
    path = config_file(tmp_path, {"master_seed": 5, "federation": {"rounds": 3}})
    cfg = load_config(path)
    assert cfg.master_seed == 5 and cfg.federation.rounds == 3

    seeded = load_config(path, seed=11)
    assert seeded.master_seed == 11
    assert seeded.federation.seed == 11

    overridden = load_config(path, overrides=["federation.rounds=9"])
    assert overridden.federation.rounds == 9

    with pytest.raises(ConfigurationError, match="not found"):
        load_config(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(ConfigurationError, match="valid JSON"):
        load_config(bad)
    with pytest.raises(ConfigurationError, match="--seed"):
        load_config(path, seed=-3)
