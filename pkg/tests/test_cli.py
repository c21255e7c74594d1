"""Tests for the command-line interface: run, sweep, verify."""

from __future__ import annotations

import shutil
import subprocess

import pytest

from taskfed.cli import main

CONFIG_TEXT = """
scenario: label-het-synthetic
groups:
  count: 2
  sizes: [2, 2]
rounds: 3
local_epochs: 2
lr:
  quadratic: 0.05
scheme: colnet-hca
split_spec: 4
seed: 5
out: {out}
hca:
  c: 0.4
alpha:
  - [0.0, 0.5]
  - [0.5, 0.0]
scenario_params:
  head_dim: 2
"""


@pytest.fixture
def config_path(tmp_path):
    out_dir = tmp_path / "runs"
    path = tmp_path / "experiment.yaml"
    path.write_text(CONFIG_TEXT.format(out=out_dir))
    return str(path), out_dir


class TestRun:
    def test_writes_outputs_and_exits_zero(self, config_path, capsys):
        path, out_dir = config_path
        assert main(["run", "--config", path]) == 0
        captured = capsys.readouterr()
        assert (out_dir / "colnet-hca.csv").exists()
        assert (out_dir / "colnet-hca-summary.json").exists()
        assert (out_dir / "colnet-hca-transcript.ndjson").exists()
        assert "final_mean_train_loss" in captured.out
        assert captured.out.count("wrote ") == 3

    def test_scheme_override(self, config_path):
        path, out_dir = config_path
        assert main(["run", "--config", path, "--scheme", "plain-cross"]) == 0
        assert (out_dir / "plain-cross.csv").exists()
        assert not (out_dir / "colnet-hca.csv").exists()

    def test_out_override(self, config_path, tmp_path):
        path, _ = config_path
        other = tmp_path / "elsewhere"
        assert main(["run", "--config", path, "--out", str(other)]) == 0
        assert (other / "colnet-hca.csv").exists()

    def test_seed_override_changes_results(self, config_path, tmp_path):
        path, _ = config_path
        a_dir, b_dir = tmp_path / "a", tmp_path / "b"
        main(["run", "--config", path, "--seed", "1", "--out", str(a_dir)])
        main(["run", "--config", path, "--seed", "2", "--out", str(b_dir)])
        a = (a_dir / "colnet-hca.csv").read_bytes()
        b = (b_dir / "colnet-hca.csv").read_bytes()
        assert a != b

    def test_same_seed_is_byte_identical(self, config_path, tmp_path):
        path, _ = config_path
        a_dir, b_dir = tmp_path / "a", tmp_path / "b"
        main(["run", "--config", path, "--out", str(a_dir)])
        main(["run", "--config", path, "--out", str(b_dir)])
        for name in ("colnet-hca.csv", "colnet-hca-transcript.ndjson"):
            assert (a_dir / name).read_bytes() == (b_dir / name).read_bytes()

    def test_missing_config_fails(self, tmp_path, capsys):
        missing = str(tmp_path / "none.yaml")
        assert main(["run", "--config", missing]) == 1
        assert "error: bad-config" in capsys.readouterr().err


class TestSweep:
    def test_all_schemes_produce_files(self, config_path, capsys):
        path, out_dir = config_path
        assert main(["sweep", "--config", path, "--schemes", "all"]) == 0
        out = capsys.readouterr().out
        for scheme in ("no-agg", "intra-only", "plain-cross", "colnet-hca", "linear-combine"):
            assert (out_dir / f"{scheme}.csv").exists()
            assert f"{scheme}: rows=12" in out

    def test_subset_of_schemes(self, config_path):
        path, out_dir = config_path
        assert main(["sweep", "--config", path, "--schemes", "no-agg,intra-only"]) == 0
        assert (out_dir / "no-agg.csv").exists()
        assert (out_dir / "intra-only.csv").exists()
        assert not (out_dir / "plain-cross.csv").exists()

    def test_unknown_scheme_rejected(self, config_path, capsys):
        path, _ = config_path
        assert main(["sweep", "--config", path, "--schemes", "no-agg,quantum"]) == 1
        assert "error: bad-scheme" in capsys.readouterr().err

    def test_rows_equalized_across_schemes(self, config_path):
        path, out_dir = config_path
        main(["sweep", "--config", path, "--schemes", "all"])
        counts = {
            f.name: sum(1 for _ in open(f, encoding="utf-8"))
            for f in out_dir.glob("*.csv")
        }
        assert len(set(counts.values())) == 1  # header + rounds * nodes each


class TestVerify:
    def test_passes_on_sound_config(self, config_path, capsys):
        path, _ = config_path
        assert main(["verify", "--config", path]) == 0
        out = capsys.readouterr().out
        assert out.count("PASS") == 6
        assert "FAIL" not in out
        for name in (
            "rounds completed",
            "deterministic replay",
            "protocol invariants",
            "head privacy",
            "training schedule",
            "optimality gap sign",
        ):
            assert name in out

    def test_fails_on_missing_config(self, tmp_path, capsys):
        assert main(["verify", "--config", str(tmp_path / "none.yaml")]) == 1


class TestEntryPoint:
    def test_console_script_installed(self):
        exe = shutil.which("taskfed")
        assert exe, "taskfed console script not on PATH"
        result = subprocess.run(
            [exe, "--help"], capture_output=True, text=True, timeout=60
        )
        assert result.returncode == 0
        for sub in ("run", "sweep", "verify"):
            assert sub in result.stdout
