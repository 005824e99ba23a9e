"""Experiment runner: configs, artifacts, exit codes, sweeps, determinism."""

import csv
import json
import os

import numpy as np
import pytest

from stefanlab.cli import main

_SINE = {"kind": "sine", "amplitude": 0.05}


def _write(tmp_path, name, cfg):
    target = tmp_path / name
    target.write_text(json.dumps(cfg))
    return str(target)


def _load(out_dir, name):
    with open(os.path.join(out_dir, name)) as fh:
        return json.load(fh)


def test_run_forward_writes_summary_and_manifest(tmp_path):
    out = str(tmp_path / "out")
    cfg = _write(tmp_path, "cfg.json", {
        "scenario": "forward",
        "physical": {"T": 0.2, "z0": _SINE},
        "scheme": {"n": 16, "m": 16},
        "out_dir": out,
    })
    assert main(["run", "--config", cfg]) == 0
    summary = _load(out, "summary.json")
    assert summary["final_norm"] < summary["initial_norm"]
    manifest = _load(out, "manifest.json")
    assert manifest["scenario"] == "forward"
    assert manifest["scheme"]["n"] == 16
    assert "version" in manifest
    assert os.path.exists(os.path.join(out, "state.csv"))


def test_run_convergence_ratio_near_four(tmp_path):
    out = str(tmp_path / "conv")
    cfg = _write(tmp_path, "cfg.json", {
        "scenario": "convergence",
        "physical": {"T": 0.1},
        "scheme": {"n": 20, "m": 40},
        "out_dir": out,
    })
    assert main(["run", "--config", cfg]) == 0
    summary = _load(out, "summary.json")
    assert summary["error_ratio"] == pytest.approx(4.0, rel=0.1)


def test_run_hum_writes_module_artifact(tmp_path):
    out = str(tmp_path / "hum")
    cfg = _write(tmp_path, "cfg.json", {
        "scenario": "hum",
        "physical": {"z0": _SINE},
        "scheme": {"n": 16, "m": 24},
        "hum": {"epsilon": 1e-4},
        "out_dir": out,
    })
    assert main(["run", "--config", cfg]) == 0
    hum = _load(out, "hum-summary.json")
    assert hum["epsilon"] == 1e-4
    assert hum["final_norm"] > 0.0
    assert os.path.exists(os.path.join(out, "control.csv"))


def test_run_fixedpoint_trivial_converges_in_one(tmp_path):
    out = str(tmp_path / "fp")
    cfg = _write(tmp_path, "cfg.json", {
        "scenario": "fixedpoint",
        "scheme": {"n": 16, "m": 16},
        "out_dir": out,
    })
    assert main(["run", "--config", cfg]) == 0
    summary = _load(out, "summary.json")
    assert summary["converged"] is True
    assert summary["outer_iterations"] == 1
    assert os.path.exists(os.path.join(out, "fixedpoint-history.csv"))


def test_run_observability_writes_trace(tmp_path):
    out = str(tmp_path / "obs")
    cfg = _write(tmp_path, "cfg.json", {
        "scenario": "observability",
        "scheme": {"n": 16, "m": 32},
        "out_dir": out,
    })
    assert main(["run", "--config", cfg]) == 0
    payload = _load(out, "observability.json")
    assert payload["constant"] > 0.0
    assert len(payload["trace"]) == payload["iterations"]
    assert payload["dense_constant"] == pytest.approx(payload["constant"], rel=1e-6)


def test_run_carleman_writes_trials(tmp_path):
    out = str(tmp_path / "carl")
    cfg = _write(tmp_path, "cfg.json", {
        "scenario": "carleman",
        "scheme": {"n": 16, "m": 16},
        "carleman": {"trials": 3},
        "out_dir": out,
    })
    assert main(["run", "--config", cfg]) == 0
    report = _load(out, "carleman-report.json")
    assert len(report["trials"]) == 3
    summary = _load(out, "summary.json")
    assert summary["monotone_under_s_doubling"] is True


def test_malformed_geometry_exits_2(tmp_path, capsys):
    cfg = _write(tmp_path, "bad.json", {
        "scenario": "forward",
        "physical": {"b": 0.6},
    })
    assert main(["run", "--config", cfg]) == 2
    err = capsys.readouterr().err
    assert "physical" in err
    assert "0 < b0 < b < R_star < R0 < E" in err


def test_unknown_key_exits_2(tmp_path, capsys):
    cfg = _write(tmp_path, "bad.json", {
        "scenario": "forward",
        "scheme": {"nodes": 20},
    })
    assert main(["run", "--config", cfg]) == 2
    assert "scheme.nodes" in capsys.readouterr().err


def test_unknown_scenario_exits_2(tmp_path, capsys):
    cfg = _write(tmp_path, "bad.json", {"scenario": "warp"})
    assert main(["run", "--config", cfg]) == 2
    assert "scenario" in capsys.readouterr().err


def test_missing_config_exits_2(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2
    assert "cannot read" in capsys.readouterr().err


def test_scenario_failure_exits_1(tmp_path, capsys):
    cfg = _write(tmp_path, "breach.json", {
        "scenario": "stefan",
        "physical": {"T": 1.0, "z0": {"kind": "sine", "amplitude": -2.0}},
        "scheme": {"n": 16, "m": 32},
        "out_dir": str(tmp_path / "breach"),
    })
    assert main(["run", "--config", cfg]) == 1
    assert "RadiusBreachError" in capsys.readouterr().err


def test_identical_seeds_identical_summaries(tmp_path):
    base = {
        "scenario": "adjoint",
        "scheme": {"n": 16, "m": 16},
        "seed": 5,
    }
    cfg = _write(tmp_path, "cfg.json", base)
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["run", "--config", cfg, "--out-dir", out1]) == 0
    assert main(["run", "--config", cfg, "--out-dir", out2]) == 0
    with open(os.path.join(out1, "summary.json"), "rb") as fh:
        first = fh.read()
    with open(os.path.join(out2, "summary.json"), "rb") as fh:
        second = fh.read()
    assert first == second


def test_seed_flag_changes_random_scenario(tmp_path):
    cfg = _write(tmp_path, "cfg.json", {
        "scenario": "adjoint",
        "scheme": {"n": 16, "m": 16},
    })
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["run", "--config", cfg, "--out-dir", out1, "--seed", "1"]) == 0
    assert main(["run", "--config", cfg, "--out-dir", out2, "--seed", "2"]) == 0
    a = _load(out1, "summary.json")
    b = _load(out2, "summary.json")
    assert a["pairing_final"] != b["pairing_final"]
    assert a["duality_defect"] <= 1e-12
    assert b["duality_defect"] <= 1e-12


def test_env_var_sets_out_dir(tmp_path, monkeypatch):
    target = str(tmp_path / "envout")
    monkeypatch.setenv("STEFANLAB_OUT_DIR", target)
    cfg = _write(tmp_path, "cfg.json", {
        "scenario": "forward",
        "scheme": {"n": 16, "m": 16},
    })
    assert main(["run", "--config", cfg]) == 0
    assert os.path.exists(os.path.join(target, "summary.json"))


def test_sweep_collects_rows_and_flags_failures(tmp_path):
    cfg_dir = tmp_path / "cfgs"
    cfg_dir.mkdir()
    for idx, eps in enumerate((1e-2, 1e-4, 1e-6)):
        _write(cfg_dir, f"hum-{idx}.json", {
            "scenario": "hum",
            "physical": {"z0": _SINE},
            "scheme": {"n": 16, "m": 24},
            "hum": {"epsilon": eps},
        })
    _write(cfg_dir, "zz-bad.json", {"scenario": "forward",
                                    "physical": {"b": 0.9}})
    base = str(tmp_path / "swp")
    code = main(["sweep", "--configs", str(cfg_dir / "*.json"),
                 "--out-dir", base, "--workers", "2"])
    assert code == 1
    with open(os.path.join(base, "sweep.csv")) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    assert [r["status"] for r in rows] == ["ok", "ok", "ok", "error"]
    finals = [float(r["final_norm"]) for r in rows[:3]]
    assert finals[0] >= finals[1] >= finals[2]
    assert rows[3]["exit_code"] == "2"
    assert "0 < b0" in rows[3]["error"]


def test_sweep_all_ok_exits_0(tmp_path):
    cfg_dir = tmp_path / "cfgs"
    cfg_dir.mkdir()
    _write(cfg_dir, "fwd.json", {"scenario": "forward",
                                 "scheme": {"n": 16, "m": 16}})
    base = str(tmp_path / "swp")
    assert main(["sweep", "--configs", str(cfg_dir / "*.json"),
                 "--out-dir", base]) == 0
    assert os.path.exists(os.path.join(base, "fwd", "summary.json"))


def test_sweep_empty_glob_exits_2(tmp_path, capsys):
    assert main(["sweep", "--configs", str(tmp_path / "none" / "*.json")]) == 2
    assert "no configs match" in capsys.readouterr().err
