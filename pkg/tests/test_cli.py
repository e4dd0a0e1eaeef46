import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from onebit_doa import cli

REPO = Path(__file__).resolve().parent.parent
SMOKE = REPO / "configs" / "smoke.json"


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "onebit_doa.cli", *map(str, args)],
        capture_output=True, text=True,
    )


def smoke_config(tmp_path, **overrides):
    raw = json.loads(SMOKE.read_text())
    for key, section in overrides.items():
        if isinstance(section, dict):
            raw.setdefault(key, {}).update(section)
        else:
            raw[key] = section
    path = tmp_path / "config.json"
    path.write_text(json.dumps(raw))
    return path


class TestConfig:
    def test_requires_seed(self):
        with pytest.raises(cli.ConfigError):
            cli.ExperimentConfig({"array": {"sensor_count": 8}})

    def test_seed_override(self):
        config = cli.ExperimentConfig({"seed": 4}, seed=9)
        assert config.seed == 9

    def test_rejects_unknown_sections(self):
        with pytest.raises(cli.ConfigError):
            cli.ExperimentConfig({"seed": 1, "wavelength": 3.0})

    def test_rejects_unknown_keys(self):
        with pytest.raises(cli.ConfigError):
            cli.ExperimentConfig({"seed": 1, "array": {"elements": 8}})

    def test_rejects_bad_split(self):
        with pytest.raises(cli.ConfigError):
            cli.ExperimentConfig({"seed": 1, "training": {"num_scenes": 10, "num_val": 10}})

    def test_hash_tracks_content(self):
        a = cli.ExperimentConfig({"seed": 1})
        b = cli.ExperimentConfig({"seed": 1, "snapshots": {"count": 5000}})
        assert a.config_hash() != b.config_hash()
        assert a.config_hash() == cli.ExperimentConfig({"seed": 2}).config_hash()


class TestExitCodes:
    def test_zero_snapshots_is_config_error(self, tmp_path):
        cfg = smoke_config(tmp_path, snapshots={"count": 0})
        proc = run_cli("simulate", "--config", cfg, "--out", tmp_path / "o")
        assert proc.returncode == 2
        assert "config error" in proc.stderr

    def test_unknown_flag_exits_two(self, tmp_path):
        proc = run_cli("simulate", "--config", SMOKE, "--frobnicate")
        assert proc.returncode == 2

    def test_missing_config_file_exits_two(self, tmp_path):
        proc = run_cli("simulate", "--config", tmp_path / "nope.json")
        assert proc.returncode == 2

    def test_fixed_dither_violation_exits_three(self, tmp_path):
        out = tmp_path / "o"
        cfg = smoke_config(tmp_path)
        assert run_cli("simulate", "--config", cfg, "--out", out).returncode == 0
        cfg2 = smoke_config(tmp_path, dither={"policy": "fixed", "scale": 0.01})
        proc = run_cli("quantize", "--config", cfg2, "--out", out,
                       "--input", out / "snapshots.obda")
        assert proc.returncode == 3
        assert "dynamic range" in proc.stderr

    def test_training_divergence_exits_four(self, tmp_path):
        cfg = smoke_config(
            tmp_path,
            training={"learning_rate": 1e9, "weight_structure": "full",
                      "num_scenes": 12, "num_val": 3, "epochs": 4},
        )
        proc = run_cli("train", "--config", cfg, "--out", tmp_path / "o")
        assert proc.returncode == 4
        assert "diverged" in proc.stderr


class TestPipeline:
    def test_simulate_quantize_covest_chain(self, tmp_path):
        out = tmp_path / "o"
        assert run_cli("simulate", "--config", SMOKE, "--out", out).returncode == 0
        assert run_cli("quantize", "--config", SMOKE, "--out", out,
                       "--input", out / "snapshots.obda").returncode == 0
        proc = run_cli("covest", "--config", SMOKE, "--out", out,
                       "--input", out / "onebit.ob1b", "--truth", out / "scene.json")
        assert proc.returncode == 0
        lines = (out / "covest.csv").read_text().splitlines()
        assert lines[1] == "metric,value"
        metrics = dict(line.split(",") for line in lines[2:])
        assert float(metrics["max_norm"]) > 0
        assert float(metrics["frobenius"]) >= float(metrics["max_norm"])
        est = np.load(out / "covariance.npy")
        assert est.shape == (4, 4)
        assert np.max(np.abs(est - est.conj().T)) == 0.0

    def test_sidecars_embed_provenance(self, tmp_path):
        out = tmp_path / "o"
        assert run_cli("simulate", "--config", SMOKE, "--out", out).returncode == 0
        meta = json.loads((out / "snapshots.obda.meta.json").read_text())
        assert set(meta) == {"config_hash", "seed"}
        assert meta["seed"] == 7

    def test_train_then_eval(self, tmp_path):
        out = tmp_path / "o"
        proc = run_cli("train", "--config", SMOKE, "--out", out, "--save-dataset")
        assert proc.returncode == 0, proc.stderr
        assert (out / "checkpoint.lsta").exists()
        assert (out / "dataset.dset").exists()
        report = json.loads((out / "training_report.json").read_text())
        assert len(report["losses"]["train"]) == 3
        proc = run_cli("eval", "--config", SMOKE, "--out", out,
                       "--model", out / "checkpoint.lsta")
        assert proc.returncode == 0, proc.stderr
        summary = json.loads((out / "summary.json").read_text())
        assert summary["num_eval_scenes"] == 4
        assert 0.0 <= summary["lista_success_rate"] <= 1.0

    def test_music_subcommand(self, tmp_path):
        out = tmp_path / "o"
        proc = run_cli("music", "--config", SMOKE, "--out", out, "--exact-covariance")
        assert proc.returncode == 0, proc.stderr
        payload = json.loads((out / "music_peaks.json").read_text())
        assert len(payload["peaks"]) <= 2
        lines = (out / "spectrum_music.csv").read_text().splitlines()
        assert lines[1] == "angle_deg,value,kind"
        assert lines[2].endswith("music")

    def test_bounds_subcommand(self, tmp_path):
        out = tmp_path / "o"
        proc = run_cli("bounds", "--config", SMOKE, "--out", out)
        assert proc.returncode == 0, proc.stderr
        lines = (out / "bounds.csv").read_text().splitlines()
        assert lines[1].split(",")[0] == "sweep_variable"
        assert len(lines) == 2 + 4 + 1  # header rows + depth+1 layers

    def test_repro_summary_schema(self, tmp_path):
        out = tmp_path / "o"
        proc = run_cli("repro-fig2", "a", "--config", SMOKE, "--out", out)
        assert proc.returncode == 0, proc.stderr
        summary = json.loads((out / "summary.json").read_text())
        required = {"config_hash", "seed", "peaks", "doa_errors_deg", "cov_error",
                    "losses", "bound"}
        assert required <= set(summary)
        assert set(summary["cov_error"]) == {"max", "fro"}
        assert {"train", "val"} <= set(summary["losses"])
        for peak in summary["peaks"]:
            assert set(peak) == {"angle_deg", "value"}
        assert (out / "spectrum_lista.csv").exists()
        assert (out / "spectrum_music.csv").exists()
        assert (out / "checkpoint.lsta").exists()

    def test_solver_kind_ista(self, tmp_path):
        cfg = smoke_config(tmp_path, solver={"kind": "ista", "depth": 4,
                                             "ista_iterations": 200, "ista_penalty": 1.0})
        out = tmp_path / "o"
        proc = run_cli("repro-fig2", "a", "--config", cfg, "--out", out)
        assert proc.returncode == 0, proc.stderr
        summary = json.loads((out / "summary.json").read_text())
        assert summary["losses"]["train"] == []


class TestDeterminism:
    @pytest.mark.parametrize("command", [
        ("simulate",),
        ("bounds",),
        ("music",),
        ("train", "--save-dataset"),
        ("repro-fig2", "a"),
    ])
    def test_rerun_is_byte_identical(self, tmp_path, command):
        outs = []
        for name in ("first", "second"):
            out = tmp_path / name
            if command[0] == "repro-fig2":
                args = [command[0], command[1], "--config", SMOKE, "--out", out]
            else:
                args = [command[0], *command[1:], "--config", SMOKE, "--out", out]
            proc = run_cli(*args)
            assert proc.returncode == 0, proc.stderr
            outs.append(out)
        first, second = outs
        names = sorted(p.name for p in first.iterdir())
        assert names == sorted(p.name for p in second.iterdir())
        for name in names:
            assert (first / name).read_bytes() == (second / name).read_bytes(), name

    def test_quantize_and_covest_rerun_identical(self, tmp_path):
        base = tmp_path / "base"
        assert run_cli("simulate", "--config", SMOKE, "--out", base).returncode == 0
        outs = []
        for name in ("q1", "q2"):
            out = tmp_path / name
            assert run_cli("quantize", "--config", SMOKE, "--out", out,
                           "--input", base / "snapshots.obda").returncode == 0
            assert run_cli("covest", "--config", SMOKE, "--out", out,
                           "--input", out / "onebit.ob1b",
                           "--truth", base / "scene.json").returncode == 0
            outs.append(out)
        for name in sorted(p.name for p in outs[0].iterdir()):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_eval_rerun_identical(tmp_path):
    out = tmp_path / "t"
    assert run_cli("train", "--config", SMOKE, "--out", out).returncode == 0
    results = []
    for name in ("e1", "e2"):
        eout = tmp_path / name
        assert run_cli("eval", "--config", SMOKE, "--out", eout,
                       "--model", out / "checkpoint.lsta").returncode == 0
        results.append((eout / "summary.json").read_bytes())
    assert results[0] == results[1]
