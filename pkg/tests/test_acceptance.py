"""Acceptance suite: eleven numbered criteria, one pass/fail line each.

Each test prints ``criterion N: PASS/FAIL - detail`` and asserts with the
same line, so both verbose listings and failure output name the criterion.
The two desk-scale training criteria share one session fixture so the
trained models are built once.
"""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from fedqsim.compression.codec import (
    CompressedModel,
    compress_parameter_set,
    decode,
    decompress_parameter_set,
    encode,
)
from fedqsim.compression.quant import (
    QuantConfig,
    QuantizedTensor,
    dequantize,
    quantize,
    step_size,
)
from fedqsim.federation.aggregation import AggregationState
from fedqsim.federation.config import Algorithm, FederationConfig
from fedqsim.federation.simulator import run_training
from fedqsim.models import (
    CandidateGeneratorConfig,
    RankerConfig,
    build_candidate_generator,
    build_ranker,
    evaluate_candidate_generator,
)
from fedqsim.nn.losses import LossKind
from fedqsim.nn.network import (
    finite_difference_gradient,
    init_parameters,
    loss_and_param_gradients,
    param_shapes,
    parameter_count,
)
from fedqsim.nn.params import ParameterSet
from fedqsim.data.partition import partition_by_user, partition_iid
from fedqsim.runner.central import train_central
from fedqsim.runner.cli import main as cli_main
from fedqsim.runner.config import ExperimentConfig
from fedqsim.runner.experiments import prepare_experiment
from fedqsim.seeds import substream

from test_gradients import max_rel_error, random_history_batch, random_rating_batch


def verdict(num: int, ok: bool, detail: str) -> None:
    line = f"criterion {num}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    assert ok, line


def desk_config(master_seed: int, ordering: str = "timestamp_asc") -> ExperimentConfig:
    """Shared desk-scale synthetic task for the efficacy criteria."""
    return ExperimentConfig.from_dict({
        "master_seed": master_seed,
        "data": {
            "synthetic": {"num_users": 2000, "num_movies": 500,
                          "num_genres": 18, "cluster_count": 8},
            "window": 7,
            "train_fraction": 0.8,
            "ordering": ordering,
            "partition": "per_user",
        },
        "model": {"embedding_dim": 16, "hidden_sizes": [64, 32],
                  "groupnorm_groups": 8},
        "federation": {"rounds": 50, "clients_per_round": 100,
                       "batch_size": 16, "learning_rate": 0.3},
        "metrics": {"top_k": 10, "eval_every": 50},
    })


@pytest.fixture(scope="session")
def desk_runs():
    """Final top-10 accuracy per seed for FedAvg and FedQ(L=10), plus the
    seed-0 FedQ model and its evaluator for the compression criterion."""
    out = {"fedavg": {}, "fedq": {}}
    for seed in (0, 1, 2):
        prepared = prepare_experiment(desk_config(seed))
        efn = prepared.make_eval_fn()
        for name, (algo, length) in (
            ("fedavg", (Algorithm.FEDAVG, 1)),
            ("fedq", (Algorithm.FEDQ, 10)),
        ):
            fed = FederationConfig(
                algorithm=algo, rounds=50, clients_per_round=100,
                queue_length=length, local_epochs=1, batch_size=16,
                learning_rate=0.3, seed=seed,
            )
            params, series = run_training(
                prepared.model_spec, prepared.loss_kind, fed,
                prepared.train_dataset, prepared.partition,
                eval_fn=efn, eval_every=50,
            )
            out[name][seed] = series.final().top_k_accuracy
            if name == "fedq" and seed == 0:
                out["params"] = params
                out["eval_fn"] = efn
    return out


def test_criterion_01_architecture_parameter_counts():
    cg = build_candidate_generator(CandidateGeneratorConfig(
        input_vocab_size=53_797, output_vocab_size=53_796))
    ranker = build_ranker(RankerConfig(
        num_users=162_541, num_movies=53_796, num_genres=20))
    cg_count = parameter_count(cg)
    ranker_count = parameter_count(ranker)
    fc1 = param_shapes(ranker)["fc1.weight"]
    ok = (cg_count == 17_994_852 and ranker_count == 12_136_170
          and fc1 == (256, 177))
    verdict(1, ok, f"candidate generator {cg_count:,} parameters, "
                   f"ranker {ranker_count:,}, fc1 weight {fc1}")


def test_criterion_02_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    worst = 0.0
    instances = 0
    for _ in range(10):
        vocab = int(rng.integers(8, 24))
        spec = build_candidate_generator(CandidateGeneratorConfig(
            input_vocab_size=vocab + 1, output_vocab_size=vocab,
            embedding_dim=2 * int(rng.integers(2, 5)),
            hidden_sizes=(2 * int(rng.integers(3, 8)), 2 * int(rng.integers(2, 6))),
            groupnorm_groups=2,
        ))
        assert parameter_count(spec) <= 10_000
        params = init_parameters(spec, substream(instances, "init"))
        batch = random_history_batch(rng, vocab_out=vocab, window=4, batch=5)
        _, analytic, _ = loss_and_param_gradients(
            spec, params, batch, batch.targets, LossKind.SOFTMAX_CROSS_ENTROPY)
        numeric = finite_difference_gradient(
            spec, params, batch, batch.targets,
            LossKind.SOFTMAX_CROSS_ENTROPY, epsilon=1e-5)
        worst = max(worst, max_rel_error(analytic, numeric))
        instances += 1
    loss_cycle = (LossKind.SOFTMAX_CROSS_ENTROPY,
                  LossKind.MEAN_SQUARED_ERROR,
                  LossKind.SUM_OF_BOTH)
    for i in range(12):
        users = int(rng.integers(5, 12))
        movies = int(rng.integers(6, 14))
        genres = int(rng.integers(3, 7))
        spec = build_ranker(RankerConfig(
            num_users=users, num_movies=movies, num_genres=genres,
            user_dim=int(rng.integers(3, 6)), movie_dim=int(rng.integers(4, 8)),
            genre_dim=int(rng.integers(2, 5)),
            hidden_sizes=(2 * int(rng.integers(3, 7)),),
            use_movie_age=bool(i % 2), groupnorm_groups=2,
        ))
        assert parameter_count(spec) <= 10_000
        params = init_parameters(spec, substream(instances, "init"))
        batch = random_rating_batch(rng, users=users, movies=movies,
                                    genres=genres, batch=6)
        loss_kind = loss_cycle[i % 3]
        _, analytic, _ = loss_and_param_gradients(
            spec, params, batch, batch.targets, loss_kind)
        numeric = finite_difference_gradient(
            spec, params, batch, batch.targets, loss_kind, epsilon=1e-5)
        worst = max(worst, max_rel_error(analytic, numeric))
        instances += 1
    verdict(2, instances >= 20 and worst < 1e-4,
            f"max relative gradient error {worst:.2e} over {instances} "
            f"random model instances")


def test_criterion_03_aggregation_matches_batch_weighted_mean():
    shapes = {"a.weight": (7, 5), "b.bias": (11,)}
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(1000 + seed)
        updates = [
            ParameterSet((n, rng.standard_normal(s)) for n, s in shapes.items())
            for _ in range(100)
        ]
        weights = rng.uniform(0.05, 10.0, size=100)
        state = AggregationState(updates[0], float(weights.sum()))
        for update, w in zip(updates, weights):
            state.accumulate(update, float(w))
        merged = state.finalize()
        for name in shapes:
            stack = np.stack([u[name] for u in updates])
            expect = np.tensordot(weights, stack, axes=1) / weights.sum()
            rel = float(np.abs(merged[name] - expect).max() / np.abs(expect).max())
            worst = max(worst, rel)
    verdict(3, worst < 1e-12,
            f"max relative deviation {worst:.2e} over 50 seeds x 100 updates")


def test_criterion_04_single_queue_degenerates_to_fedavg(toy_cg):
    spec, params, dataset = toy_cg
    partition = partition_by_user(dataset)
    eval_subset = dataset.subset(np.arange(min(200, len(dataset))))

    def efn(p):
        m = evaluate_candidate_generator(spec, p, eval_subset, k=5)
        return {"top_k_accuracy": m.top_k_accuracy}

    results = {}
    for algo in (Algorithm.FEDAVG, Algorithm.FEDQ):
        fed = FederationConfig(
            algorithm=algo, rounds=10, clients_per_round=8, queue_length=1,
            local_epochs=1, batch_size=8, learning_rate=0.2, seed=5,
        )
        results[algo] = run_training(
            spec, LossKind.SOFTMAX_CROSS_ENTROPY, fed, dataset, partition,
            eval_fn=efn, initial_params=params, eval_every=5,
        )
    params_a, series_a = results[Algorithm.FEDAVG]
    params_b, series_b = results[Algorithm.FEDQ]
    lines_a = [r.to_json_line() for r in series_a.records]
    lines_b = [r.to_json_line() for r in series_b.records]
    ok = params_a.equal_bits(params_b) and lines_a == lines_b
    verdict(4, ok, f"10 rounds: parameters bit-equal, "
                   f"{len(lines_a)} metric records identical")


def test_criterion_05_queue_length_scales_sequential_steps(toy_cg):
    spec, _, dataset = toy_cg
    # 120 samples over 10 equal shards of 12; E=2, B=5 gives 6 steps/client
    ds = dataset.subset(np.arange(120))
    partition = partition_iid(120, 10, substream(0, "partition"))
    per_round = {}
    totals = {}
    for length in (1, 2, 5, 10):
        fed = FederationConfig(
            algorithm=Algorithm.FEDAVG if length == 1 else Algorithm.FEDQ,
            rounds=2, clients_per_round=10, queue_length=length,
            local_epochs=2, batch_size=5, learning_rate=0.1, seed=0,
        )
        _, series = run_training(
            spec, LossKind.SOFTMAX_CROSS_ENTROPY, fed, ds, partition)
        per_round[length] = [r.critical_path_steps for r in series.records
                             if r.round > 0]
        totals[length] = [r.local_steps for r in series.records if r.round > 0]
    base = per_round[1]
    exact = all(
        per_round[length] == [length * b for b in base]
        for length in (2, 5, 10)
    )
    same_work = all(totals[length] == totals[1] for length in (2, 5, 10))
    verdict(5, exact and same_work,
            f"per-round critical path {base[0]} steps at L=1, scaled exactly "
            f"by L in {{2, 5, 10}} at equal total work {totals[1][0]}")


def test_criterion_06_queue_chaining_beats_fedavg(desk_runs):
    gains = [desk_runs["fedq"][s] - desk_runs["fedavg"][s] for s in (0, 1, 2)]
    wins = sum(g >= 0 for g in gains)
    mean_gain = float(np.mean(gains))
    detail = ", ".join(
        f"seed {s}: {desk_runs['fedq'][s]:.4f} vs {desk_runs['fedavg'][s]:.4f}"
        for s in (0, 1, 2)
    )
    verdict(6, wins >= 2 and mean_gain > 0,
            f"FedQ(L=10) wins {wins}/3 seeds, mean top-10 gain "
            f"{mean_gain:+.4f} ({detail})")


def test_criterion_07_step_size_formula_and_round_trip():
    pinned = (
        all(step_size(0, f) == 1.0 for f in (0, 1, 2, 3))
        and step_size(-30, 2) == 0.005859375
        and step_size(-48, 2) == 4 * 2.0 ** -14
    )
    rng = np.random.default_rng(7)
    worst_ratio = 0.0
    for _ in range(100):
        qp = int(rng.integers(-48, 9))
        f_qp = int(rng.integers(0, 4))
        delta = step_size(qp, f_qp)
        n = int(rng.integers(1, 2000))
        values = rng.standard_normal(n) * delta * 10 ** rng.uniform(0, 4)
        recon = dequantize(quantize(values, delta, qp=qp))
        err = float(np.abs(recon - values).max())
        worst_ratio = max(worst_ratio, err / (delta / 2))
    ok = pinned and worst_ratio <= 1 + 1e-12
    verdict(7, ok, f"pinned step sizes exact; worst round-trip error "
                   f"{worst_ratio:.6f} of the half-step bound over 100 tensors")


def test_criterion_08_codec_is_lossless():
    rng = np.random.default_rng(8)
    exponents = np.concatenate([
        rng.uniform(0.0, 4.0, 828),
        rng.uniform(4.0, 5.3, 150),
        rng.uniform(5.3, 6.0, 18),
    ])
    sizes = np.clip(np.rint(10.0 ** exponents).astype(np.int64), 1, 10 ** 6)
    sizes = np.concatenate([sizes, [1, 10 ** 6, 4, 4]])
    assert len(sizes) == 1000
    tensors = []
    total = 0
    for i, n in enumerate(sizes):
        n = int(n)
        if i == len(sizes) - 1:
            values = np.array([2 ** 31 - 1, -(2 ** 31 - 1), 0, 1], dtype=np.int64)
        else:
            sigma = 10 ** rng.uniform(0.0, 5.0)
            values = np.rint(rng.normal(0.0, sigma, n))
            values[rng.random(n) < rng.uniform(0.0, 0.99)] = 0
        values = np.clip(values, -(2 ** 31 - 1), 2 ** 31 - 1).astype(np.int32)
        tensors.append(QuantizedTensor(
            name=f"t{i}", indices=values, step_size=0.005859375,
            shape=(n,), qp=-30))
        total += n
    intact = True
    for start in range(0, len(tensors), 20):
        group = tensors[start:start + 20]
        blob = encode(group).to_bytes()
        decoded = decode(CompressedModel.from_bytes(blob))
        for orig, back in zip(group, decoded):
            if (back.name != orig.name or back.shape != orig.shape
                    or not np.array_equal(back.indices, orig.indices)):
                intact = False
    verdict(8, intact, f"{len(tensors)} tensors, {total:,} values, sizes "
                       f"1..1e6, sparsity 0..0.99: every decode exact")


def test_criterion_09_compression_saves_space_at_low_cost(desk_runs):
    params = desk_runs["params"]
    efn = desk_runs["eval_fn"]
    baseline_acc = desk_runs["fedq"][0]
    raw_bytes = 4 * params.total_count()
    sweep = (-48, -43, -38, -30, -24)
    sizes, savings, accs = [], [], []
    for qp in sweep:
        blob = compress_parameter_set(params, QuantConfig(qp=qp, f_qp=2))
        restored = decompress_parameter_set(blob)
        sizes.append(len(blob))
        savings.append(1.0 - len(blob) / raw_bytes)
        accs.append(efn(restored)["top_k_accuracy"])
    non_increasing = all(a >= b for a, b in zip(sizes, sizes[1:]))
    viable = [
        (qp, s, a) for qp, s, a in zip(sweep, savings, accs)
        if s >= 0.70 and baseline_acc - a <= 0.02
    ]
    detail = "; ".join(
        f"qp {qp}: {s:.1%} saved, top-10 {a:.4f}"
        for qp, s, a in zip(sweep, savings, accs)
    )
    verdict(9, non_increasing and bool(viable),
            f"baseline top-10 {baseline_acc:.4f}, sizes non-increasing, "
            f"{len(viable)} viable settings ({detail})")


def test_criterion_10_preprocessing_counts_and_ordering():
    from fedqsim.data.samples import build_watch_histories
    from fedqsim.data.synthetic import generate_synthetic

    interactions, _ = generate_synthetic(
        num_users=150, num_movies=60, num_genres=6, cluster_count=3,
        lognormal_mu=2.2, lognormal_sigma=0.7, zipf_s=1.2, seed=10,
    )
    counts = np.bincount(interactions.user_ids, minlength=interactions.num_users)
    expected = int(np.maximum(counts - 1, 0).sum())
    dataset = build_watch_histories(interactions, window=7)
    counts_ok = len(dataset) == expected
    window_ok = (dataset.histories.shape[1] == 7
                 and int(dataset.lengths.max()) <= 7)

    wins = 0
    finals = []
    for seed in (0, 1, 2):
        accs = {}
        for ordering in ("timestamp_asc", "random"):
            prepared = prepare_experiment(desk_config(seed, ordering))
            efn = prepared.make_eval_fn()
            _, _, series = train_central(
                prepared.model_spec, prepared.loss_kind,
                prepared.train_dataset, epochs=5, batch_size=64,
                learning_rate=0.3, master_seed=seed, eval_fn=efn,
                eval_every=5,
            )
            accs[ordering] = series.final().top_k_accuracy
        finals.append(accs)
        wins += accs["timestamp_asc"] > accs["random"]
    detail = ", ".join(
        f"seed {s}: {f['timestamp_asc']:.4f} vs {f['random']:.4f}"
        for s, f in zip((0, 1, 2), finals)
    )
    verdict(10, counts_ok and window_ok and wins >= 2,
            f"history count = sum of max(n_u - 1, 0) exactly; window capped "
            f"at 7; temporal order wins {wins}/3 seeds ({detail})")


def test_criterion_11_repeated_runs_are_byte_identical(tmp_path):
    config = {
        "master_seed": 3,
        "data": {
            "synthetic": {"num_users": 80, "num_movies": 40,
                          "num_genres": 5, "cluster_count": 3},
            "window": 5,
            "train_fraction": 0.8,
        },
        "model": {"embedding_dim": 8, "hidden_sizes": [16, 8],
                  "groupnorm_groups": 4},
        "federation": {"algorithm": "fedq", "rounds": 3,
                       "clients_per_round": 6, "queue_length": 3,
                       "batch_size": 8, "learning_rate": 0.2},
        "compression": {"enabled": True, "qp": -30},
        "metrics": {"top_k": 5},
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config))
    for sub in ("a", "b"):
        code = cli_main(["train-federated", "--config", str(config_path),
                         "--out", str(tmp_path / sub)])
        assert code == 0
    jsonl_same = ((tmp_path / "a" / "metrics.jsonl").read_bytes()
                  == (tmp_path / "b" / "metrics.jsonl").read_bytes())
    model_same = ((tmp_path / "a" / "final_model.fqs").read_bytes()
                  == (tmp_path / "b" / "final_model.fqs").read_bytes())
    verdict(11, jsonl_same and model_same,
            "metric JSONL and final model byte-identical across repeat runs")
