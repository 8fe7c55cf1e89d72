"""Experiment runner, report emission, and the CLI."""

import subprocess
import sys

import pytest
import yaml

from qmlrob import bench
from qmlrob.bench import (
    ConfigError,
    ExperimentReport,
    ReportRow,
    config_hash,
    emit_report,
    parse_config,
    relative_accuracy,
    render_table,
    run_experiment,
)
from qmlrob.training import Metrics


def base_raw(**overrides):
    raw = {
        "data": {
            "kind": "blobs",
            "n_classes": 3,
            "dim": 4,
            "per_class_train": 12,
            "per_class_test": 6,
            "spread": 0.1,
        },
        "model": {"kind": "cmlp", "hidden_dim": 8},
        "train": {"lr": 0.02, "epochs": 4, "batch_size": 16},
        "seeds": [0, 1],
    }
    raw.update(overrides)
    return raw


class TestRelativeAccuracy:
    def test_reference_ratio_rounds_to_published_value(self):
        raw = relative_accuracy(46.42, 49.77)
        assert raw == pytest.approx(0.93269, abs=1e-4)
        assert round(raw, 2) == 0.93

    def test_equal_values(self):
        assert relative_accuracy(50.0, 50.0) == 1.0

    def test_zero_attack_accuracy(self):
        assert relative_accuracy(0.0, 50.0) == 0.0

    def test_zero_baseline_rejected(self):
        with pytest.raises(ValueError):
            relative_accuracy(10.0, 0.0)


class TestConfigParsing:
    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="unknown top-level"):
            parse_config(base_raw(bogus=1))

    def test_unknown_section_key(self):
        raw = base_raw()
        raw["data"]["pixels"] = 8
        with pytest.raises(ConfigError, match="unknown keys in 'data'"):
            parse_config(raw)

    def test_missing_sections(self):
        with pytest.raises(ConfigError, match="requires"):
            parse_config({"seeds": [0]})

    def test_empty_seeds_rejected(self):
        with pytest.raises(ConfigError, match="seeds"):
            parse_config(base_raw(seeds=[]))

    def test_gradient_attack_in_mixed_mode_rejected(self):
        raw = base_raw(
            mode={"kind": "mixed", "channels": [{"kind": "depolarizing", "p": 0.01}]},
            attack={"kind": "fgsm", "eps": 0.1},
        )
        with pytest.raises(ConfigError, match="gradient attacks"):
            parse_config(raw)

    def test_quid_needs_quantum_encoder(self):
        raw = base_raw(attack={"kind": "quid", "ratio": 0.5})
        with pytest.raises(ConfigError, match="quantum encoder"):
            parse_config(raw)

    def test_defense_requires_poisoning(self):
        raw = base_raw(
            attack={"kind": "fgsm", "eps": 0.1},
            defense={"keep_fraction": 0.7},
        )
        with pytest.raises(ConfigError, match="poisoning"):
            parse_config(raw)

    def test_pure_mode_rejects_channels(self):
        raw = base_raw(
            mode={"kind": "pure", "channels": [{"kind": "depolarizing", "p": 0.01}]}
        )
        with pytest.raises(ConfigError, match="pure mode"):
            parse_config(raw)

    def test_round_trip_of_valid_config(self):
        cfg = parse_config(base_raw(attack={"kind": "label_flip", "ratio": 0.5}))
        assert cfg.attack.kind == "label_flip"
        assert cfg.seeds == (0, 1)
        assert config_hash(cfg) == config_hash(parse_config(base_raw(attack={"kind": "label_flip", "ratio": 0.5})))


class TestRunExperiment:
    def test_baseline_only_rows(self, tmp_path):
        cfg = parse_config(base_raw(out_dir=str(tmp_path)))
        report = run_experiment(cfg)
        assert {r.condition for r in report.rows} == {"baseline"}
        assert all(r.relative_accuracy == 1.0 for r in report.rows)
        assert len(report.rows) == 2  # one pure row per seed

    def test_label_flip_produces_ratios_and_asr(self, tmp_path):
        cfg = parse_config(
            base_raw(attack={"kind": "label_flip", "ratio": 0.5}, out_dir=str(tmp_path))
        )
        report = run_experiment(cfg)
        attacked = [r for r in report.rows if r.condition == "attacked"]
        assert len(attacked) == 2
        for r in attacked:
            assert r.relative_accuracy is not None
            assert 0.0 <= r.asr <= 100.0
        assert (tmp_path / "seed_0" / "poison_manifest.txt").exists()
        assert (tmp_path / "seed_0" / "train_log.tsv").exists()

    def test_fgsm_zero_eps_keeps_baseline_accuracy(self, tmp_path):
        cfg = parse_config(
            base_raw(attack={"kind": "fgsm", "eps": 0.0}, out_dir=str(tmp_path))
        )
        report = run_experiment(cfg)
        by_seed = {}
        for r in report.rows:
            by_seed.setdefault(r.seed, {})[r.condition] = r
        for rows in by_seed.values():
            assert rows["attacked"].metrics.accuracy == rows["baseline"].metrics.accuracy
            assert rows["attacked"].relative_accuracy == 1.0

    def test_mixed_mode_adds_noisy_rows(self, tmp_path):
        raw = base_raw(
            model={"kind": "qmlp", "encoding": "angle", "layers": 1, "n_qubits": 4},
            mode={"kind": "mixed", "channels": [{"kind": "depolarizing", "p": 0.05}]},
            out_dir=str(tmp_path),
            seeds=[0],
        )
        raw["data"]["dim"] = 4
        raw["train"]["epochs"] = 2
        report = run_experiment(parse_config(raw))
        modes = {r.eval_mode for r in report.rows}
        assert modes == {"pure", "mixed"}

    def test_defended_rows_and_weight_history(self, tmp_path):
        raw = base_raw(
            attack={"kind": "label_flip", "ratio": 0.3},
            defense={"keep_fraction": 0.7, "sweeps": 10},
            out_dir=str(tmp_path),
            seeds=[0],
        )
        report = run_experiment(parse_config(raw))
        assert {r.condition for r in report.rows} == {"baseline", "attacked", "defended"}
        assert (tmp_path / "seed_0" / "weight_history.tsv").exists()

    def test_deterministic_table_across_invocations(self, tmp_path):
        raw = base_raw(attack={"kind": "label_flip", "ratio": 0.5})
        tables = []
        for i in range(2):
            cfg = parse_config({**raw, "out_dir": str(tmp_path / f"run{i}")})
            tables.append(render_table(run_experiment(cfg)))
        assert tables[0] == tables[1]

    def test_mixed_training_uses_spsa(self, tmp_path):
        raw = {
            "data": {"kind": "blobs", "n_classes": 2, "dim": 2, "per_class_train": 8,
                     "per_class_test": 4, "spread": 0.1, "pca_dim": 2},
            "model": {"kind": "qmlp", "encoding": "angle", "layers": 1, "n_qubits": 2},
            "mode": {"kind": "mixed",
                     "channels": [{"kind": "depolarizing", "p": 0.05},
                                  {"kind": "amplitude_damping", "p": 0.05}]},
            "train": {"lr": 0.02, "epochs": 2, "batch_size": 8},
            "train_mode": "mixed",
            "seeds": [0],
            "out_dir": str(tmp_path),
        }
        report = run_experiment(parse_config(raw))
        assert {r.eval_mode for r in report.rows} == {"pure", "mixed"}
        for r in report.rows:
            assert 0.0 <= r.metrics.accuracy <= 100.0


def fixture_report():
    rows = [
        ReportRow(0, "cmlp", "baseline", "pure", Metrics(96.0, 95.5, 1.25, 4.5), 1.0, None),
        ReportRow(0, "cmlp", "attacked", "pure", Metrics(48.0, 45.25, 13.0, 52.0), 0.5, 37.5),
    ]
    return ExperimentReport(
        config_echo={"demo": True},
        config_hash="deadbeefdeadbeef",
        tool_version="qmlrob 0.1.0",
        rows=rows,
        runtime_s=1.25,
    )


GOLDEN_TABLE = (
    "seed\tmodel\tcondition\teval_mode\taccuracy\tmacro_f1\tfpr\tfnr\t"
    "relative_accuracy\tasr\tconfig_hash\n"
    "0\tcmlp\tbaseline\tpure\t96.0000\t95.5000\t1.2500\t4.5000\t1.00\t\tdeadbeefdeadbeef\n"
    "0\tcmlp\tattacked\tpure\t48.0000\t45.2500\t13.0000\t52.0000\t0.50\t37.5000\tdeadbeefdeadbeef\n"
)


class TestEmission:
    def test_table_matches_golden(self):
        assert render_table(fixture_report()) == GOLDEN_TABLE

    def test_emission_is_byte_stable(self, tmp_path):
        report = fixture_report()
        a = emit_report(report, tmp_path / "a", "both")
        b = emit_report(report, tmp_path / "b", "both")
        for pa, pb in zip(a, b):
            assert pa.read_bytes() == pb.read_bytes()

    def test_runtime_not_in_table(self, tmp_path):
        text = render_table(fixture_report())
        assert "1.25" not in text.replace("1.2500", "")

    def test_summary_mentions_medians(self):
        text = bench.render_summary(fixture_report())
        assert "medians" in text
        assert "rel_acc=0.50" in text

    def test_unknown_format_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_report(fixture_report(), tmp_path, "csv")

    def test_read_table_round_trip(self, tmp_path):
        emit_report(fixture_report(), tmp_path, "table")
        rows = bench.read_table(tmp_path / "table.tsv")
        assert rows[0]["condition"] == "baseline"
        assert rows[1]["asr"] == "37.5000"


def run_cli(args, cwd):
    return subprocess.run(
        [sys.executable, "-m", "qmlrob.cli", *args],
        capture_output=True,
        text=True,
        cwd=cwd,
    )


class TestCli:
    def write_config(self, tmp_path, raw):
        path = tmp_path / "config.yaml"
        path.write_text(yaml.safe_dump(raw))
        return path

    def test_baseline_subcommand(self, tmp_path):
        path = self.write_config(tmp_path, base_raw(out_dir=str(tmp_path / "out"), seeds=[0]))
        result = run_cli(["baseline", "--config", str(path)], tmp_path)
        assert result.returncode == 0, result.stderr
        assert (tmp_path / "out" / "table.tsv").exists()
        assert (tmp_path / "out" / "summary.txt").exists()

    def test_baseline_rejects_attack_section(self, tmp_path):
        raw = base_raw(attack={"kind": "label_flip", "ratio": 0.5})
        path = self.write_config(tmp_path, raw)
        result = run_cli(["baseline", "--config", str(path)], tmp_path)
        assert result.returncode == 1
        assert "error:" in result.stderr
        assert result.stderr.count("\n") == 1

    def test_attack_subcommand_with_overrides(self, tmp_path):
        raw = base_raw(attack={"kind": "label_flip", "ratio": 0.5})
        path = self.write_config(tmp_path, raw)
        out = tmp_path / "ov"
        result = run_cli(
            ["attack", "--config", str(path), "--seed", "1", "--out", str(out), "--format", "table"],
            tmp_path,
        )
        assert result.returncode == 0, result.stderr
        table = (out / "table.tsv").read_text()
        assert "\n1\t" in table and "\n0\t" not in table
        assert not (out / "summary.txt").exists()

    def test_sweep_reports_label_flip_ratios_for_both_model_kinds(self, tmp_path):
        # one sweep run covers the quantum model and the classical baseline
        raw = base_raw(out_dir=str(tmp_path / "sweep"), seeds=[0])
        raw["data"]["dim"] = 4
        raw["data"]["n_classes"] = 4
        raw["data"]["per_class_train"] = 10
        raw["data"]["per_class_test"] = 5
        raw["model"] = {"kind": "cmlp", "hidden_dim": 8, "layers": 1, "n_qubits": 4}
        raw["attack"] = {"kind": "label_flip", "ratio": 0.5}
        raw["sweep"] = {"model.kind": ["cmlp", "qmlp"]}
        raw["train"]["epochs"] = 2
        path = self.write_config(tmp_path, raw)
        result = run_cli(["sweep", "--config", str(path)], tmp_path)
        assert result.returncode == 0, result.stderr
        for kind in ("cmlp", "qmlp"):
            rows = bench.read_table(tmp_path / "sweep" / f"kind={kind}" / "table.tsv")
            attacked = [r for r in rows if r["condition"] == "attacked"]
            assert attacked and all(r["relative_accuracy"] for r in attacked)

    def test_sweep_restricts_qmlp_depths(self, tmp_path):
        raw = base_raw()
        raw["model"] = {"kind": "qmlp", "encoding": "angle", "layers": 2, "n_qubits": 4}
        raw["data"]["dim"] = 4
        raw["sweep"] = {"model.layers": [2, 3]}
        path = self.write_config(tmp_path, raw)
        result = run_cli(["sweep", "--config", str(path)], tmp_path)
        assert result.returncode == 1
        assert "restricted" in result.stderr

    def test_report_rerenders_table(self, tmp_path):
        emit_report(fixture_report(), tmp_path, "table")
        result = run_cli(["report", "--table", str(tmp_path / "table.tsv")], tmp_path)
        assert result.returncode == 0
        assert "medians" in result.stdout

    def test_missing_config_file_fails_cleanly(self, tmp_path):
        result = run_cli(["baseline", "--config", str(tmp_path / "nope.yaml")], tmp_path)
        assert result.returncode == 1
        assert "error:" in result.stderr
