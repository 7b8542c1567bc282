"""End-to-end tests for the faasguard command-line interface.

Each test drives cli.main() with an argv list and asserts on exit codes,
stdout/stderr, and the files produced. Training commands run with tiny
hidden widths and few epochs so the suite stays fast.
"""

import hashlib
import json

import pytest

from faasguard.autoencoder.persist import load_model
from faasguard.cli import main
from faasguard.detect import load_reports
from faasguard.ingest import load_labels

TRAIN_ARGS = ["--epochs", "2", "--hidden-widths", "10,8,6"]


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def config_line(out):
    for line in out.splitlines():
        if line.startswith("config "):
            return json.loads(line[len("config "):])
    raise AssertionError(f"no config echo in output:\n{out}")


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A simulated corpus pair plus a trained model, built once via the CLI."""
    root = tmp_path_factory.mktemp("cli")
    assert main([
        "simulate", "--app", "airline", "--iterations", "30", "--benign",
        "--out", str(root / "benign"), "--seed", "61", "--quiet",
    ]) == 0
    assert main([
        "simulate", "--app", "airline", "--iterations", "15",
        "--anomaly-rate", "0.2", "--out", str(root / "mixed"),
        "--seed", "62", "--quiet",
    ]) == 0
    assert main([
        "train", "--events", str(root / "benign" / "events.ndjson"),
        "--labels", str(root / "benign" / "labels.ndjson"),
        "--model", str(root / "model.fgm"), "--quiet", *TRAIN_ARGS,
    ]) == 0
    return root


class TestSimulate:
    def test_benign_flag_forces_all_benign(self, tmp_path, capsys):
        out_dir = tmp_path / "data"
        code, out, _ = run(
            capsys, "simulate", "--app", "airline", "--iterations", "10",
            "--anomaly-rate", "0.5", "--benign", "--out", str(out_dir),
        )
        assert code == 0
        assert config_line(out)["anomalyRate"] == 0.0
        manifest = json.loads((out_dir / "manifest.json").read_text())
        labels = manifest["counts"]["labels"]
        assert set(labels) == {"benign"}
        assert manifest["anomalies"] == 0

    def test_vod_anomaly_mix(self, tmp_path, capsys):
        out_dir = tmp_path / "vod"
        code, out, _ = run(
            capsys, "simulate", "--app", "vod", "--files", "400",
            "--anomaly-rate", "0.1", "--out", str(out_dir), "--seed", "3",
        )
        assert code == 0
        labels = load_labels(out_dir / "labels.ndjson")
        anomalous = sum(1 for v in labels.values() if v != "benign")
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert anomalous == manifest["anomalies"]
        # binomial(targeted, 0.1) within a 3.5-sigma band
        targeted = manifest["targetedInvocations"]
        mean, sigma = 0.1 * targeted, (0.09 * targeted) ** 0.5
        assert abs(anomalous - mean) <= 3.5 * sigma
        # stdout reports one count line per label present
        for label in sorted(set(labels.values())):
            assert f"  {label}: " in out

    def test_rerun_is_byte_identical(self, tmp_path, capsys):
        args = ["simulate", "--app", "vod", "--files", "60",
                "--anomaly-rate", "0.15", "--seed", "9", "--quiet"]
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        capsys.readouterr()
        for name in ("events.ndjson", "labels.ndjson", "manifest.json"):
            assert digest(a / name) == digest(b / name), name

    def test_invalid_probability_is_config_error(self, tmp_path, capsys):
        code, _, err = run(
            capsys, "simulate", "--app", "airline", "--iterations", "5",
            "--anomaly-rate", "1.5", "--out", str(tmp_path / "x"),
        )
        assert code == 1
        assert "anomaly_rate" in err

    def test_unknown_app_rejected_by_parser(self, tmp_path, capsys):
        code, _, err = run(
            capsys, "simulate", "--app", "banking", "--iterations", "5",
            "--out", str(tmp_path / "x"),
        )
        assert code == 1
        assert "invalid choice" in err

    def test_out_path_is_file_is_data_error(self, tmp_path, capsys):
        blocker = tmp_path / "blocked"
        blocker.write_text("not a directory")
        code, _, err = run(
            capsys, "simulate", "--app", "airline", "--iterations", "5",
            "--benign", "--out", str(blocker),
        )
        assert code == 2
        assert err.startswith("error:")

    def test_missing_out_is_config_error(self, capsys):
        code, _, err = run(
            capsys, "simulate", "--app", "airline", "--iterations", "5")
        assert code == 1
        assert "--out" in err


class TestTrain:
    def test_model_round_trips_and_prints_thresholds(
            self, workspace, tmp_path, capsys):
        model_path = tmp_path / "model.fgm"
        code, out, _ = run(
            capsys, "train",
            "--events", str(workspace / "benign" / "events.ndjson"),
            "--model", str(model_path), *TRAIN_ARGS,
        )
        assert code == 0
        assert config_line(out)["seed"] == 7  # default seed echoed
        for w in (3, 5, 10):
            assert f"window {w}:" in out
        assert "threshold=" in out
        ensemble = load_model(model_path)
        assert ensemble.metadata["epochs"] == 2
        assert ensemble.metadata["hiddenWidths"] == [10, 8, 6]

    def test_zero_epochs_is_config_error(self, workspace, tmp_path, capsys):
        code, _, err = run(
            capsys, "train",
            "--events", str(workspace / "benign" / "events.ndjson"),
            "--model", str(tmp_path / "m.fgm"),
            "--epochs", "0", "--hidden-widths", "10,8,6",
        )
        assert code == 1
        assert "epoch" in err

    def test_anomalous_labels_are_data_error(
            self, workspace, tmp_path, capsys):
        model_path = tmp_path / "m.fgm"
        code, _, err = run(
            capsys, "train",
            "--events", str(workspace / "mixed" / "events.ndjson"),
            "--labels", str(workspace / "mixed" / "labels.ndjson"),
            "--model", str(model_path), *TRAIN_ARGS,
        )
        assert code == 2
        assert "benign" in err
        assert not model_path.exists()  # partial output removed

    def test_missing_events_file_is_data_error(self, tmp_path, capsys):
        code, _, err = run(
            capsys, "train", "--events", str(tmp_path / "absent.ndjson"),
            "--model", str(tmp_path / "m.fgm"), *TRAIN_ARGS,
        )
        assert code == 2

    def test_bad_hidden_widths_is_config_error(
            self, workspace, tmp_path, capsys):
        code, _, err = run(
            capsys, "train",
            "--events", str(workspace / "benign" / "events.ndjson"),
            "--model", str(tmp_path / "m.fgm"),
            "--epochs", "2", "--hidden-widths", "10,gold,6",
        )
        assert code == 1
        assert "hidden widths" in err


class TestDetect:
    def test_detect_writes_report_and_metrics(
            self, workspace, tmp_path, capsys):
        report = tmp_path / "report.ndjson"
        metrics_path = tmp_path / "metrics.json"
        code, out, _ = run(
            capsys, "detect", "--model", str(workspace / "model.fgm"),
            "--events", str(workspace / "mixed" / "events.ndjson"),
            "--labels", str(workspace / "mixed" / "labels.ndjson"),
            "--report", str(report), "--metrics", str(metrics_path),
        )
        assert code == 0
        labels = load_labels(workspace / "mixed" / "labels.ndjson")
        reports = load_reports(report)
        assert {r.function_flow_id for r in reports} == set(labels)
        payload = json.loads(metrics_path.read_text())
        assert set(payload) == {"flow", "window"}
        counts = payload["flow"]["counts"]
        total = sum(counts[k] for k in ("tp", "fp", "tn", "fn"))
        assert total == len(labels)
        assert "scored" in out and "anomalous" in out

    def test_missing_model_is_data_error(self, workspace, tmp_path, capsys):
        code, _, err = run(
            capsys, "detect", "--model", str(tmp_path / "nope.fgm"),
            "--events", str(workspace / "mixed" / "events.ndjson"),
            "--report", str(tmp_path / "r.ndjson"),
        )
        assert code == 2
        assert not (tmp_path / "r.ndjson").exists()

    def test_empty_events_yield_empty_report(
            self, workspace, tmp_path, capsys):
        empty = tmp_path / "empty.ndjson"
        empty.write_text("")
        report = tmp_path / "report.ndjson"
        code, out, _ = run(
            capsys, "detect", "--model", str(workspace / "model.fgm"),
            "--events", str(empty), "--report", str(report),
        )
        assert code == 0
        assert report.read_text() == ""
        assert "scored 0 flows" in out

    def test_sparse_labels_fill_benign_and_extras_warn(
            self, workspace, tmp_path, capsys):
        labels = load_labels(workspace / "mixed" / "labels.ndjson")
        sparse = {k: v for k, v in labels.items() if v != "benign"}
        sparse["ff-ghost-000001"] = "data-leakage"
        sparse_path = tmp_path / "sparse.ndjson"
        sparse_path.write_text("".join(
            json.dumps({"functionFlowId": k, "label": v}) + "\n"
            for k, v in sparse.items()))
        code, out, err = run(
            capsys, "detect", "--model", str(workspace / "model.fgm"),
            "--events", str(workspace / "mixed" / "events.ndjson"),
            "--labels", str(sparse_path),
            "--report", str(tmp_path / "r.ndjson"),
        )
        assert code == 0
        assert "precision=" in out  # metrics computed from the sparse file
        assert "1 label records match no scored flow" in err

    def test_no_labels_no_metrics_section(self, workspace, tmp_path, capsys):
        code, out, _ = run(
            capsys, "detect", "--model", str(workspace / "model.fgm"),
            "--events", str(workspace / "mixed" / "events.ndjson"),
            "--report", str(tmp_path / "r.ndjson"),
        )
        assert code == 0
        assert "precision=" not in out


@pytest.fixture(scope="module")
def scored(workspace, tmp_path_factory):
    """A detect run with inline metrics, reused by the evaluate tests."""
    root = tmp_path_factory.mktemp("eval")
    report = root / "report.ndjson"
    metrics_path = root / "inline.json"
    assert main([
        "detect", "--model", str(workspace / "model.fgm"),
        "--events", str(workspace / "mixed" / "events.ndjson"),
        "--labels", str(workspace / "mixed" / "labels.ndjson"),
        "--report", str(report), "--metrics", str(metrics_path),
        "--quiet",
    ]) == 0
    return report, metrics_path


class TestEvaluate:
    def test_matches_detect_inline_metrics(
            self, workspace, scored, tmp_path, capsys):
        report, inline = scored
        out_path = tmp_path / "metrics.json"
        code, out, _ = run(
            capsys, "evaluate", "--report", str(report),
            "--labels", str(workspace / "mixed" / "labels.ndjson"),
            "--out", str(out_path),
        )
        assert code == 0
        assert json.loads(out_path.read_text()) == json.loads(
            inline.read_text())
        assert "flow: precision=" in out
        assert "window: precision=" in out

    def test_sparse_labels_default_to_benign(
            self, workspace, scored, tmp_path, capsys):
        # a label file naming only the anomalous flows is a valid pairing
        report, inline = scored
        labels = load_labels(workspace / "mixed" / "labels.ndjson")
        sparse = {k: v for k, v in labels.items() if v != "benign"}
        assert 0 < len(sparse) < len(labels)
        sparse_path = tmp_path / "sparse.ndjson"
        sparse_path.write_text("".join(
            json.dumps({"functionFlowId": k, "label": v}) + "\n"
            for k, v in sparse.items()))
        out_path = tmp_path / "metrics.json"
        code, _, _ = run(
            capsys, "evaluate", "--report", str(report),
            "--labels", str(sparse_path), "--out", str(out_path),
        )
        assert code == 0
        assert json.loads(out_path.read_text()) == json.loads(
            inline.read_text())

    def test_labels_without_reports_are_data_error(
            self, workspace, scored, tmp_path, capsys):
        report, _ = scored
        labels = load_labels(workspace / "mixed" / "labels.ndjson")
        augmented = dict(labels)
        augmented["ff-ghost-000001"] = "benign"
        bad = tmp_path / "labels.ndjson"
        bad.write_text("".join(
            json.dumps({"functionFlowId": k, "label": v}) + "\n"
            for k, v in augmented.items()))
        code, _, err = run(
            capsys, "evaluate", "--report", str(report),
            "--labels", str(bad),
        )
        assert code == 2
        assert "id mismatch" in err
        assert "ff-ghost-000001" in err

    def test_all_benign_flags_undefined_recall(
            self, workspace, tmp_path, capsys):
        report = tmp_path / "report.ndjson"
        assert main([
            "detect", "--model", str(workspace / "model.fgm"),
            "--events", str(workspace / "benign" / "events.ndjson"),
            "--report", str(report), "--quiet",
        ]) == 0
        capsys.readouterr()
        code, out, _ = run(
            capsys, "evaluate", "--report", str(report),
            "--labels", str(workspace / "benign" / "labels.ndjson"),
        )
        assert code == 0
        assert "recall_undefined" in out

    def test_missing_report_is_data_error(self, workspace, tmp_path, capsys):
        code, _, _ = run(
            capsys, "evaluate", "--report", str(tmp_path / "none.ndjson"),
            "--labels", str(workspace / "benign" / "labels.ndjson"),
        )
        assert code == 2


class TestUpdate:
    def test_update_warns_on_zero_old_fraction_and_preserves_original(
            self, workspace, tmp_path, capsys):
        new_dir = tmp_path / "new"
        assert main([
            "simulate", "--app", "airline", "--iterations", "10", "--benign",
            "--out", str(new_dir), "--seed", "63", "--quiet",
        ]) == 0
        capsys.readouterr()
        model = workspace / "model.fgm"
        before = digest(model)
        out_model = tmp_path / "updated.fgm"
        code, out, err = run(
            capsys, "update", "--model", str(model),
            "--old-events", str(workspace / "benign" / "events.ndjson"),
            "--new-events", str(new_dir / "events.ndjson"),
            "--out", str(out_model), "--old-fraction", "0",
            "--epochs", "1",
        )
        assert code == 0
        assert "warning" in err and "10%" in err
        assert digest(model) == before
        updated = load_model(out_model)
        assert updated.metadata["oldFraction"] == 0.0
        assert updated.metadata["updateSeed"] == config_line(out)["seed"]
        for w in (3, 5, 10):
            assert f"window {w}: threshold=" in out

    def test_out_equal_to_model_is_config_error(
            self, workspace, tmp_path, capsys):
        code, _, err = run(
            capsys, "update", "--model", str(workspace / "model.fgm"),
            "--old-events", str(workspace / "benign" / "events.ndjson"),
            "--new-events", str(workspace / "benign" / "events.ndjson"),
            "--out", str(workspace / "model.fgm"),
        )
        assert code == 1
        assert "never overwrite" in err

    def test_wrong_old_events_is_data_error(
            self, workspace, tmp_path, capsys):
        code, _, err = run(
            capsys, "update", "--model", str(workspace / "model.fgm"),
            "--old-events", str(workspace / "mixed" / "events.ndjson"),
            "--new-events", str(workspace / "benign" / "events.ndjson"),
            "--out", str(tmp_path / "u.fgm"), "--epochs", "1",
        )
        assert code == 2
        assert "training pool" in err


class TestGlobalBehavior:
    def test_no_subcommand_is_usage_error(self, capsys):
        code, _, err = run(capsys)
        assert code == 1
        assert "subcommand" in err

    def test_help_exits_zero(self, capsys):
        code, out, _ = run(capsys, "--help")
        assert code == 0
        for name in ("simulate", "train", "detect", "update", "evaluate"):
            assert name in out

    def test_config_file_supplies_defaults_flags_win(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "app": "airline", "iterations": 8, "benign": True,
            "seed": 100, "cold_start_rate": 0.0,
        }))
        out_dir = tmp_path / "data"
        code, out, _ = run(
            capsys, "simulate", "--config", str(cfg),
            "--seed", "200", "--out", str(out_dir),
        )
        assert code == 0
        resolved = config_line(out)
        assert resolved["seed"] == 200  # flag beats config file
        assert resolved["iterations"] == 8  # config key fills the gap
        assert resolved["coldStartRate"] == 0.0

    def test_global_flag_accepted_before_subcommand(self, tmp_path, capsys):
        out_dir = tmp_path / "data"
        code, out, _ = run(
            capsys, "--seed", "300", "simulate", "--app", "airline",
            "--iterations", "5", "--benign", "--out", str(out_dir),
        )
        assert code == 0
        assert config_line(out)["seed"] == 300

    def test_malformed_config_file_is_config_error(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{not json")
        code, _, err = run(
            capsys, "simulate", "--config", str(cfg), "--app", "airline",
            "--iterations", "5", "--out", str(tmp_path / "x"),
        )
        assert code == 1
        assert "config file" in err

    def test_quiet_suppresses_config_echo(self, tmp_path, capsys):
        code, out, _ = run(
            capsys, "simulate", "--app", "airline", "--iterations", "5",
            "--benign", "--out", str(tmp_path / "q"), "--quiet",
        )
        assert code == 0
        assert out == ""
