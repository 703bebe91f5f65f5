import json
import os
import subprocess
import sys

import numpy as np
import pytest

from old3s.cli import main
from old3s.stream import load_csv


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def run_config(tmp_path, **overrides):
    doc = {
        "dataset": {"synthetic": {"n": 400, "d1": 4, "classes": 2, "margin": 3.0, "seed": 7}},
        "d2": 6,
        "window": 40,
        "variants": ["old3s"],
        "seeds": [0],
        "latent_dim": 4,
        "hidden_dim": 8,
        "depth": 2,
        "hindsight_value": 1.0,
        "out_dir": str(tmp_path / "runs"),
    }
    doc.update(overrides)
    return write_json(tmp_path / "config.json", doc)


def test_synth_writes_expected_shape(tmp_path, capsys):
    spec = write_json(
        tmp_path / "spec.json",
        {"n": 100, "d1": 4, "classes": 2, "margin": 2.0, "seed": 1, "out": str(tmp_path / "f.csv")},
    )
    assert main(["synth", spec]) == 0
    X, y = load_csv(tmp_path / "f.csv", "label")
    assert X.shape == (100, 4)
    assert set(np.unique(y)) <= {0, 1}
    header = (tmp_path / "f.csv").read_text().splitlines()[0]
    assert header == "f0,f1,f2,f3,label"


def test_synth_deterministic_bytes(tmp_path):
    spec_a = write_json(
        tmp_path / "a.json", {"n": 50, "d1": 3, "seed": 5, "out": str(tmp_path / "a.csv")}
    )
    spec_b = write_json(
        tmp_path / "b.json", {"n": 50, "d1": 3, "seed": 5, "out": str(tmp_path / "b.csv")}
    )
    assert main(["synth", spec_a]) == 0
    assert main(["synth", spec_b]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_synth_rejects_unknown_key(tmp_path, capsys):
    spec = write_json(tmp_path / "spec.json", {"n": 10, "d1": 2, "margin_typo": 1.0})
    assert main(["synth", spec]) == 2
    assert "margin_typo" in capsys.readouterr().err


def test_run_produces_artifacts_with_row_conservation(tmp_path):
    cfg = run_config(tmp_path)
    assert main(["run", cfg]) == 0
    out = tmp_path / "runs"
    csv_path = out / "old3s_seed0.csv"
    json_path = out / "old3s_seed0.json"
    assert csv_path.exists() and json_path.exists()
    rows = csv_path.read_text().splitlines()
    assert len(rows) == 401  # header + one row per round
    assert rows[0].startswith("t,phase,correct,loss,oca,p,alpha_1")
    summary = json.loads(json_path.read_text())
    assert summary["n_rounds"] == 400
    assert summary["hindsight"] == 1.0
    assert summary["config"]["seed"] == 0
    assert summary["config"]["variant"] == "old3s"


def test_run_unknown_variant_exits_2(tmp_path, capsys):
    cfg = run_config(tmp_path, variants=["old3s", "fobos"])
    assert main(["run", cfg]) == 2
    assert "fobos" in capsys.readouterr().err


def test_run_unknown_key_exits_2(tmp_path, capsys):
    cfg = run_config(tmp_path, learning_rte=0.1)
    assert main(["run", cfg]) == 2
    assert "learning_rte" in capsys.readouterr().err


def test_run_missing_dataset_exits_3(tmp_path, capsys):
    cfg = run_config(tmp_path, dataset={"path": str(tmp_path / "absent.csv")})
    assert main(["run", cfg]) == 3


def test_run_byte_identical_across_invocations(tmp_path):
    cfg_a = run_config(tmp_path, out_dir=str(tmp_path / "run_a"))
    assert main(["run", cfg_a]) == 0
    cfg_b = run_config(tmp_path, out_dir=str(tmp_path / "run_b"))
    assert main(["run", cfg_b]) == 0
    a = (tmp_path / "run_a" / "old3s_seed0.csv").read_bytes()
    b = (tmp_path / "run_b" / "old3s_seed0.csv").read_bytes()
    assert a == b


def test_seed_override_flag(tmp_path):
    cfg = run_config(tmp_path, seeds=[0, 1])
    assert main(["run", cfg, "--seed-override", "7"]) == 0
    out = tmp_path / "runs"
    assert (out / "old3s_seed7.csv").exists()
    assert not (out / "old3s_seed0.csv").exists()


def test_out_flag_overrides_directory(tmp_path):
    cfg = run_config(tmp_path)
    assert main(["run", cfg, "--out", str(tmp_path / "elsewhere")]) == 0
    assert (tmp_path / "elsewhere" / "old3s_seed0.csv").exists()


def test_run_all_variants_and_report(tmp_path, capsys):
    cfg = run_config(
        tmp_path, variants=["old3s", "old_linear", "old_fd", "zero_pad"], fixed_depth=1
    )
    assert main(["run", cfg]) == 0
    capsys.readouterr()
    assert main(["report", str(tmp_path / "runs")]) == 0
    table = capsys.readouterr().out
    for name in ("old3s", "old_linear", "old_fd", "zero_pad"):
        assert name in table


def test_report_empty_dir_exits_3(tmp_path, capsys):
    os.makedirs(tmp_path / "empty")
    assert main(["report", str(tmp_path / "empty")]) == 3


def test_check_fast_passes(capsys):
    assert main(["check", "--fast"]) == 0
    out = capsys.readouterr().out
    for name in ("nn-substrate", "vae-kl", "hedge", "ensemble"):
        assert name in out
    assert "PASS" in out and "FAIL" not in out


def test_check_detects_injected_gradient_bug(capsys):
    assert main(["check", "--fast", "--inject-gradient-bug"]) == 1
    captured = capsys.readouterr()
    assert "nn-substrate" in captured.err


def test_entry_point_runs_as_subprocess(tmp_path):
    spec = write_json(
        tmp_path / "spec.json", {"n": 10, "d1": 2, "out": str(tmp_path / "t.csv")}
    )
    proc = subprocess.run(
        [sys.executable, "-m", "old3s.cli", "synth", spec],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
