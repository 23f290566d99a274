import csv
import filecmp
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

from hnl.cli import main, read_forecast_csv
from hnl.metrics import MetricsReport

pytestmark = pytest.mark.slow

TINY = {
    "name": "tiny",
    "data": {"synthetic": {"days": 20, "seed": 4, "resolution": 12}, "stride_hours": 12},
    "targets": ["load", "wind"],
    "ladder": [1, 4, 12],
    "models": ["hnl", "direct", "persistence"],
    "net": {"d_h": 8, "encoder_hidden": [16], "decoder_hidden": [16], "direct_hidden": [16],
            "max_epochs": 3, "patience": 3},
    "seeds": [0, 1],
    "dispatch": {"days": 1, "penetrations": [0.5]},
    "toy": {"n_terms": [9, 33], "hidden": [16], "steps": 40, "diagnostic": {"enabled": False}},
}


def write_config(path: Path, **overrides) -> Path:
    cfg = {**TINY, **overrides}
    path.write_text(yaml.safe_dump(cfg))
    return path


def run(*args) -> int:
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = write_config(root / "tiny.yaml")
    out = root / "run"
    for cmd in ("train", "evaluate", "schedule", "toy"):
        assert run(cmd, "--config", cfg, "--out", out) == 0
    return cfg, out


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- exit codes

def test_unknown_model_is_config_error(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.yaml", models=["hnl", "transformer"])
    assert run("train", "--config", cfg, "--out", tmp_path / "o") == 1
    assert "models" in capsys.readouterr().err


def test_unknown_key_is_config_error(tmp_path):
    cfg = write_config(tmp_path / "c.yaml", typo_key=3)
    assert run("train", "--config", cfg, "--out", tmp_path / "o") == 1


def test_missing_config_file(tmp_path):
    assert run("train", "--config", tmp_path / "nope.yaml", "--out", tmp_path / "o") == 1


@pytest.mark.parametrize("seeds", ["a,b", "1,1", ","])
def test_bad_seed_list(tmp_path, seeds):
    cfg = write_config(tmp_path / "c.yaml")
    assert run("train", "--config", cfg, "--out", tmp_path / "o", "--seeds", seeds) == 1


def test_bad_thread_setting(tmp_path, monkeypatch):
    monkeypatch.setenv("HNL_THREADS", "zero")
    cfg = write_config(tmp_path / "c.yaml")
    assert run("train", "--config", cfg, "--out", tmp_path / "o") == 1


def test_unknown_command_exits_one(tmp_path):
    with pytest.raises(SystemExit) as info:
        run("fly", "--config", "x", "--out", tmp_path)
    assert info.value.code == 1


def test_missing_checkpoint_is_runtime_error(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.yaml")
    assert run("evaluate", "--config", cfg, "--out", tmp_path / "empty") == 2
    assert "checkpoint" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    cfg = write_config(tmp_path / "c.yaml", ladder=[4, 1])
    proc = subprocess.run([sys.executable, "-m", "hnl", "train", "--config", str(cfg),
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 1 and "ladder" in proc.stderr


# ---------------------------------------------------------------- outputs

def test_train_outputs(pipeline):
    _, out = pipeline
    for target in ("load", "wind"):
        for model in TINY["models"]:
            for seed in TINY["seeds"]:
                assert (out / "checkpoints" / f"{target}_{model}_s{seed}.json").exists()
    log = read_rows(out / "logs" / "load_hnl_s0.csv")
    assert list(log[0]) == ["resolution", "epoch", "train_mse", "val_mse"]
    manifest = json.loads((out / "manifest_train.json").read_text())
    assert len(manifest["config_hash"]) == 64
    for name, digest in manifest["outputs"].items():
        assert len(digest) == 64 and (out / name).exists()


def test_report_values_match_direct_metric_calls(pipeline):
    _, out = pipeline
    actual = read_forecast_csv(out / "forecasts" / "load_actual.csv")
    fc = read_forecast_csv(out / "forecasts" / "load_hnl_s1_opt.csv")
    ref = MetricsReport.compute("hnl", fc, actual)
    rows = [r for r in read_rows(out / "metrics.csv")
            if r["model"] == "hnl" and r["target"] == "load" and r["seed"] == "1"
            and r["coordination"] == "opt"]
    assert len(rows) == 3
    for r in rows:
        assert float(r["rmse_time"]) == pytest.approx(ref.rmse_time[float(r["resolution"])], abs=1e-12)
        assert float(r["rmse_freq"]) == pytest.approx(ref.rmse_freq, abs=1e-12)
        assert float(r["tce"]) == pytest.approx(ref.tce, abs=1e-12)


def test_summary_aggregates(pipeline):
    _, out = pipeline
    rows = read_rows(out / "summary.csv")
    persist = [r for r in rows if r["model"] == "persistence"]
    assert persist and all(float(r["std"]) == 0.0 for r in persist)  # seed-free baseline
    bu = [r for r in rows if r["coordination"] == "bu" and r["metric"] == "tce"]
    assert bu and all(float(r["mean"]) == 0.0 for r in bu)
    assert all(r["n_seeds"] == "2" for r in rows)
    assert "rmse_freq" in (out / "report.txt").read_text()


def test_bu_keeps_finest_level(pipeline):
    _, out = pipeline
    raw = read_forecast_csv(out / "forecasts" / "wind_direct_s0_none.csv")
    bu = read_forecast_csv(out / "forecasts" / "wind_direct_s0_bu.csv")
    np.testing.assert_array_equal(raw[12.0], bu[12.0])


def test_spectral_containment_file(pipeline):
    _, out = pipeline
    rows = read_rows(out / "spectral_containment.csv")
    assert len(rows) == 4
    for r in rows:
        assert all(float(v) <= 1e-9 for k, v in r.items() if k.startswith("max_above"))


def test_schedule_outputs(pipeline):
    _, out = pipeline
    da = read_rows(out / "schedule" / "day_ahead_costs.csv")
    perfect = [r for r in da if r["model"] == "perfect"]
    assert perfect
    for r in perfect:
        assert abs(float(r["additional_cost"])) <= 1e-6 * float(r["c_da"])
    models = {r["model"] for r in da}
    assert models == {"perfect", *TINY["models"]}
    matrix = read_rows(out / "schedule" / "cost_matrix.csv")
    pairs = {(r["load_model"], r["wind_model"]) for r in matrix}
    assert ("perfect", "perfect") in pairs and ("hnl", "direct") in pairs


def test_toy_outputs(pipeline):
    _, out = pipeline
    summary = read_rows(out / "toy" / "summary.csv")
    assert [(r["n_terms"], r["seed"]) for r in summary] == [("9", "0"), ("33", "0"), ("9", "1"), ("33", "1")]
    spec = read_rows(out / "toy" / "spectrum_N9_s0.csv")
    assert float(spec[0]["omega"]) == 0.0


def test_rerun_is_byte_identical(pipeline, tmp_path, monkeypatch):
    cfg, out = pipeline
    again = tmp_path / "again"
    monkeypatch.setenv("HNL_THREADS", "1")
    for cmd in ("train", "evaluate", "schedule", "toy"):
        assert run(cmd, "--config", cfg, "--out", again) == 0
    cmp = filecmp.dircmp(out, again)

    def diffs(c):
        found = list(c.diff_files) + list(c.left_only) + list(c.right_only)
        for sub in c.subdirs.values():
            found += diffs(sub)
        return found

    assert diffs(cmp) == []


def test_seed_override(pipeline, tmp_path):
    cfg, _ = pipeline
    out = tmp_path / "one"
    assert run("train", "--config", cfg, "--out", out, "--seeds", "7") == 0
    names = sorted(p.name for p in (out / "checkpoints").iterdir())
    assert all("_s7." in n for n in names)
    manifest = json.loads((out / "manifest_train.json").read_text())
    assert manifest["config"]["seeds"] == [7]
