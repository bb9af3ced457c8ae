"""Command line interface: dispatch, exit codes, output locations."""

from __future__ import annotations

import json

import pytest

from fedqsim.runner.cli import main


SMALL = {
    "master_seed": 1,
    "data": {
        "synthetic": {"num_users": 50, "num_movies": 25, "num_genres": 4,
                      "cluster_count": 2},
        "window": 5,
        "train_fraction": 0.8,
    },
    "model": {"embedding_dim": 8, "hidden_sizes": [16, 8], "groupnorm_groups": 4},
    "federation": {"rounds": 1, "clients_per_round": 4, "batch_size": 8,
                   "learning_rate": 0.2},
    "metrics": {"top_k": 5},
}


@pytest.fixture()
def config_path(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(SMALL))
    return path


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_stats_prints_json(config_path, capsys):
    code, out, err = run_cli(capsys, "stats", "--config", str(config_path))
    assert code == 0
    stats = json.loads(out)
    assert stats["num_users"] == 50
    assert stats["num_interactions"] > 0


def test_prepare_data_writes_artifacts(config_path, tmp_path, capsys):
    out_dir = tmp_path / "prep"
    code, out, err = run_cli(capsys, "prepare-data", "--config", str(config_path),
                             "--out", str(out_dir))
    assert code == 0
    summary = json.loads(out)
    assert summary["clients"] > 0
    assert (out_dir / "train.fqd").is_file()
    assert f"artifacts written to {out_dir}" in err


def test_train_federated_prints_final_record(config_path, tmp_path, capsys):
    out_dir = tmp_path / "fed"
    code, out, err = run_cli(capsys, "train-federated", "--config", str(config_path),
                             "--out", str(out_dir))
    assert code == 0
    record = json.loads(out.splitlines()[-1])
    assert record["round"] == 1
    assert record["bytes_up"] > 0
    assert "wall_seconds" not in record
    assert (out_dir / "metrics.jsonl").is_file()
    assert (out_dir / "final_model.fqs").is_file()


def test_train_federated_is_deterministic(config_path, tmp_path, capsys):
    a_dir, b_dir = tmp_path / "a", tmp_path / "b"
    for out_dir in (a_dir, b_dir):
        code, _, _ = run_cli(capsys, "train-federated", "--config", str(config_path),
                             "--out", str(out_dir))
        assert code == 0
    assert (a_dir / "metrics.jsonl").read_bytes() == (b_dir / "metrics.jsonl").read_bytes()
    assert (a_dir / "final_model.fqs").read_bytes() == (b_dir / "final_model.fqs").read_bytes()


def test_seed_flag_changes_the_run(config_path, tmp_path, capsys):
    a_dir, b_dir = tmp_path / "a", tmp_path / "b"
    run_cli(capsys, "train-federated", "--config", str(config_path), "--out", str(a_dir))
    run_cli(capsys, "train-federated", "--config", str(config_path),
            "--seed", "7", "--out", str(b_dir))
    assert (a_dir / "metrics.jsonl").read_bytes() != (b_dir / "metrics.jsonl").read_bytes()
    resolved = json.loads((b_dir / "config.resolved.json").read_text())
    assert resolved["master_seed"] == 7
    assert resolved["federation"]["seed"] == 7


def test_override_flag(config_path, tmp_path, capsys):
    out_dir = tmp_path / "o"
    code, out, _ = run_cli(capsys, "train-federated", "--config", str(config_path),
                           "--override", "federation.rounds=2",
                           "--override", "metrics.top_k=3",
                           "--out", str(out_dir))
    assert code == 0
    assert json.loads(out.splitlines()[-1])["round"] == 2
    resolved = json.loads((out_dir / "config.resolved.json").read_text())
    assert resolved["metrics"]["top_k"] == 3


def test_train_central(config_path, tmp_path, capsys):
    out_dir = tmp_path / "central"
    code, out, _ = run_cli(capsys, "train-central", "--config", str(config_path),
                           "--out", str(out_dir))
    assert code == 0
    record = json.loads(out.splitlines()[-1])
    assert record["round"] == 1
    assert record["bytes_up"] == 0
    assert record["local_steps"] > 0


def test_compress_eval_and_qps_flag(config_path, tmp_path, capsys):
    out_dir = tmp_path / "ce"
    code, out, _ = run_cli(capsys, "compress-eval", "--config", str(config_path),
                           "--qps=-30,-20", "--out", str(out_dir))
    assert code == 0
    lines = [json.loads(l) for l in out.splitlines() if l.startswith("{")]
    assert [r["qp"] for r in lines] == [None, -30, -20]
    assert (out_dir / "compress_eval.jsonl").is_file()
    with pytest.raises(SystemExit):
        main(["compress-eval", "--config", str(config_path),
              "--qps", "low,high", "--out", str(out_dir)])


def test_report_subcommand(config_path, tmp_path, capsys):
    fed_dir = tmp_path / "fed"
    run_cli(capsys, "train-federated", "--config", str(config_path),
            "--out", str(fed_dir))
    report_dir = tmp_path / "report"
    code, out, err = run_cli(capsys, "report", str(fed_dir / "metrics.jsonl"),
                             "--out", str(report_dir))
    assert code == 0
    assert "run_id" in out
    assert f"report written to {report_dir}" in out
    assert (report_dir / "report.csv").is_file()
    assert (report_dir / "summary.csv").is_file()
    assert (report_dir / "top_k_accuracy.png").is_file()


def test_exit_code_two_on_config_errors(config_path, tmp_path, capsys):
    code, _, err = run_cli(capsys, "stats", "--config", str(tmp_path / "absent.json"))
    assert code == 2
    assert "fedqsim: error:" in err

    code, _, err = run_cli(capsys, "train-federated", "--config", str(config_path),
                           "--override", "federation.clients_per_round=5",
                           "--override", "federation.queue_length=3",
                           "--override", "federation.algorithm=fedq",
                           "--out", str(tmp_path / "x"))
    assert code == 2
    assert "multiple of" in err

    code, _, err = run_cli(capsys, "report", str(tmp_path / "nope.jsonl"),
                           "--out", str(tmp_path / "r"))
    assert code == 2
    assert "not found" in err


def test_default_out_dir_honors_environment(config_path, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("FQS_OUT_DIR", str(tmp_path / "envroot"))
    code, _, err = run_cli(capsys, "prepare-data", "--config", str(config_path))
    assert code == 0
    assert (tmp_path / "envroot" / "prepare-data" / "train.fqd").is_file()


def test_missing_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as err:
        main([])
    assert err.value.code == 2
