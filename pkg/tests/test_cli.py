"""CLI behavior: config resolution, artifacts, determinism, exit codes."""

import filecmp
from pathlib import Path

import numpy as np
import pytest

from lorentzgen import cli


def run_cli(argv):
    return cli.main(argv)


class TestConfigPlumbing:
    def test_parse_and_format_roundtrip(self):
        text = "alpha = 3\nbeta = 0.5\ngamma = true\nname = hello\n"
        cfg = cli.parse_config_text(text)
        assert cfg == {"alpha": 3, "beta": 0.5, "gamma": True, "name": "hello"}
        assert cli.parse_config_text(cli.format_config(cfg)) == cfg

    def test_comments_and_blanks(self):
        cfg = cli.parse_config_text("# comment\n\nx = 1  # trailing\n")
        assert cfg == {"x": 1}

    def test_malformed_line(self):
        with pytest.raises(cli.ConfigError):
            cli.parse_config_text("just some words\n")

    def test_unknown_key_rejected(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("nonsense = 1\n")
        rc = run_cli(["manifold-selftest", "--config", str(bad), "--out", str(tmp_path)])
        assert rc == 2

    def test_missing_config_file(self, tmp_path):
        rc = run_cli(["manifold-selftest", "--config", str(tmp_path / "none.cfg"), "--out", str(tmp_path)])
        assert rc == 2

    def test_bad_set_flag(self, tmp_path):
        rc = run_cli(["manifold-selftest", "--set", "oops", "--out", str(tmp_path)])
        assert rc == 2


class TestSelftestCommand:
    def test_pass_and_artifacts(self, tmp_path):
        rc = run_cli(["manifold-selftest", "--out", str(tmp_path), "--set", "cases=500"])
        assert rc == 0
        (run_dir,) = list(tmp_path.iterdir())
        for name in ("properties.tsv", "config.resolved", "schema.txt", "DONE"):
            assert (run_dir / name).exists()
        assert "schema_version = 1" in (run_dir / "schema.txt").read_text()

    def test_injected_fault_fails_closure(self, tmp_path):
        rc = run_cli(
            ["manifold-selftest", "--out", str(tmp_path), "--set", "cases=500", "--set", "fault_time_bias=1e-6"]
        )
        assert rc == 1
        (run_dir,) = list(tmp_path.iterdir())
        table = (run_dir / "properties.tsv").read_text().splitlines()
        closure_rows = [r for r in table if r.startswith("hyperboloid closure (lift)")]
        assert closure_rows and closure_rows[0].endswith("\t0")

    def test_reports_per_property_errors(self, tmp_path, capsys):
        run_cli(["manifold-selftest", "--out", str(tmp_path), "--set", "cases=200"])
        out = capsys.readouterr().out
        assert "max_error=" in out and "PASS" in out


class TestDeterminism:
    def test_concat_distance_byte_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            rc = run_cli(
                ["concat-distance", "--scale", "ci", "--out", str(out), "--set", "samples=500", "--set", "dims=3"]
            )
            assert rc == 0
        (da,), (db,) = list(a.iterdir()), list(b.iterdir())
        assert da.name == db.name  # same config hash and seed
        for f in sorted(p.name for p in da.iterdir()):
            assert filecmp.cmp(da / f, db / f, shallow=False), f

    def test_seed_changes_run_directory(self, tmp_path):
        run_cli(["concat-distance", "--out", str(tmp_path), "--set", "samples=200", "--set", "dims=3", "--seed", "1"])
        run_cli(["concat-distance", "--out", str(tmp_path), "--set", "samples=200", "--set", "dims=3", "--seed", "2"])
        assert len(list(tmp_path.iterdir())) == 2


class TestGradSurfaceCommand:
    def test_small_grid_summary(self, tmp_path):
        rc = run_cli(["concat-grad-surface", "--out", str(tmp_path), "--set", "points=41"])
        assert rc == 0
        (run_dir,) = list(tmp_path.iterdir())
        summary = dict(
            line.split(" = ") for line in (run_dir / "summary.txt").read_text().splitlines()
        )
        assert float(summary["max_abs_direct_time"]) <= 1.0 + 1e-9
        assert float(summary["max_abs_direct_s0"]) <= 1.0 + 1e-9
        assert float(summary["max_abs_direct_s1"]) <= 1.0 + 1e-9
        # the coarse grid still hits the +-100 boundary where entries are large
        assert float(summary["max_abs_tangent_time"]) >= 10.0

    def test_grid_file_shape(self, tmp_path):
        run_cli(["concat-grad-surface", "--out", str(tmp_path), "--set", "points=21"])
        (run_dir,) = list(tmp_path.iterdir())
        rows = (run_dir / "grad_direct_time.tsv").read_text().splitlines()
        assert len(rows) == 22  # header + 21 grid rows
        assert len(rows[1].split("\t")) == 21


class TestDepthCommand:
    def test_tiny_depth_run(self, tmp_path):
        rc = run_cli(
            [
                "concat-depth", "--out", str(tmp_path), "--scale", "ci",
                "--set", "width=4", "--set", "depth=3", "--set", "steps=4", "--set", "batch=8",
            ]
        )
        assert rc == 0
        (run_dir,) = list(tmp_path.iterdir())
        rows = (run_dir / "grad_norms_direct.tsv").read_text().splitlines()
        assert len(rows) == 5 and len(rows[0].split("\t")) == 4
        summary = dict(line.split(" = ") for line in (run_dir / "summary.txt").read_text().splitlines())
        assert summary["direct_nan_events"] == "0"


class TestTreeGenCommand:
    def test_micro_pipeline(self, tmp_path):
        rc = run_cli(
            [
                "tree-gen", "--out", str(tmp_path), "--scale", "ci",
                "--set", "dataset_size=10", "--set", "train_size=7",
                "--set", "min_nodes=4", "--set", "max_nodes=7",
                "--set", "ae_epochs=2", "--set", "gan_epochs=2",
                "--set", "sample_count=4", "--set", "decode_cap=14",
                "--set", "ae_batch_size=4",
            ]
        )
        assert rc == 0
        (run_dir,) = list(tmp_path.iterdir())
        for name in ("train.trees", "test.trees", "sampled.trees", "metrics.tsv", "summary.txt",
                     "autoencoder.lzw", "gan.lzw", "DONE"):
            assert (run_dir / name).exists(), name
        sampled = (run_dir / "sampled.trees").read_text().splitlines()
        assert len(sampled) == 4
