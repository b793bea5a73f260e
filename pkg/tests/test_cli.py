import csv
import json
import math

import jsonschema
import numpy as np
import pytest

from leakopt import schemas
from leakopt.cli import main
from leakopt.config import ConfigError, ExperimentConfig
from leakopt.pulses import SampledPulse, write_pulse

DT = 1 / 2.4


def write_config(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def read_json(path):
    return json.loads(path.read_text())


# -- configuration -----------------------------------------------------------

def test_config_defaults_and_units():
    cfg = ExperimentConfig.from_dict({})
    dev = cfg.device()
    assert dev.dim == 4
    assert abs(dev.anharmonicity - 2 * math.pi * -0.31528) < 1e-12
    assert abs(cfg.dt - 1 / 2.4) < 1e-15
    assert abs(cfg.ssb_frequency - 2 * math.pi * 0.1) < 1e-15
    assert cfg["device"]["qubit_freq_mhz"] == 5117.22
    noise = cfg.noise()
    assert noise.t1 == 105e3 and noise.t2 == 39e3 and noise.dephasing_k == 0
    cost = cfg.cost()
    assert (cost.m, cost.n_sequences, cost.n_shots) == (120, 20, 1000)
    assert cfg.simulation().rise_time == 0.3
    assert cfg["rb"]["lengths"] == [1, 5, 10, 20, 40, 60, 90, 120, 160, 200]


def test_config_overrides_and_rejections(tmp_path):
    cfg = ExperimentConfig.from_dict({"noise": {"t1_us": None, "t2_us": None}, "drag": {"n_samples": 26}})
    assert cfg.noise().is_noiseless
    assert cfg.context().n_samples == 26
    assert cfg["noise"]["dephasing_k"] == 0.0

    for bad in (
        {"unknown": 1},
        {"device": {"colour": "red"}},
        {"cost": {"m": 0}},
        {"cost": {"shots": 1.5}},
        {"rb": {"lengths": [1, 5]}},
        {"rb": {"lengths": [1, 5, 5]}},
        {"noise": {"t1_us": 10, "t2_us": 30}},
        {"device": {"d": 1}},
    ):
        with pytest.raises(ConfigError):
            cfg = ExperimentConfig.from_dict(bad)
            cfg.noise()
            cfg.device()

    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError, match="line 1"):
        ExperimentConfig.load(broken)
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.json")


def test_config_snapshot_round_trip():
    cfg = ExperimentConfig.from_dict({"cost": {"seed": 5}})
    again = ExperimentConfig.from_dict(cfg.snapshot())
    assert again.snapshot() == cfg.snapshot()
    assert cfg.stage_settings(pwc=True).seed == 6


# -- commands ----------------------------------------------------------------

FAST = {"cmaes": {"max_iter": 6, "pwc_max_iter": 3}, "cost": {"K": 4, "m": 40}}


def test_simulate_pulse_zero_and_errors(tmp_path, capsys):
    pulse = tmp_path / "zero.csv"
    write_pulse(pulse, SampledPulse(np.zeros(10), DT))
    out = tmp_path / "out"
    assert main(["--out", str(out), "simulate-pulse", str(pulse)]) == 0
    report = read_json(out / "simulate-pulse" / "simulation.json")
    jsonschema.validate(report, schemas.SIMULATION_REPORT)
    assert set(report) >= {"p0", "p1", "p2", "p3"}
    assert abs(report["p0"] - 1) < 1e-12 and report["leakage"] < 1e-12

    bad = tmp_path / "bad.csv"
    bad.write_text("index,re,im\n0,0.1\n")
    assert main(["--out", str(out), "simulate-pulse", str(bad)]) == 2
    assert "row 2" in capsys.readouterr().err
    assert main(["--out", str(out), "simulate-pulse", str(tmp_path / "none.csv")]) == 2


def test_exit_codes_for_input_errors(tmp_path):
    cfg = write_config(tmp_path / "c.json", {"bogus": True})
    assert main(["--config", cfg, "--out", str(tmp_path), "calibrate-drag"]) == 2
    assert main(["--out", str(tmp_path), "--threads", "0", "calibrate-drag"]) == 2
    assert main(["--out", str(tmp_path), "--seed", "-3", "calibrate-drag"]) == 2
    assert main(["--out", str(tmp_path), "optimize-pwc", "--drag", str(tmp_path / "missing.json")]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2


def test_runtime_failure_exit_code(tmp_path):
    # drive dephasing beyond probability 1 makes every candidate invalid
    cfg = write_config(tmp_path / "c.json", {**FAST, "noise": {"dephasing_k": 1e4}})
    assert main(["--config", cfg, "--out", str(tmp_path / "o"), "calibrate-drag"]) == 1
    assert (tmp_path / "o" / "calibrate-drag" / "trace.jsonl").exists()


def test_calibrate_drag_noiseless_n26(tmp_path):
    cfg = write_config(
        tmp_path / "c.json",
        {"noise": {"t1_us": None, "t2_us": None}, "drag": {"n_samples": 26}, "cmaes": {"max_iter": 20}},
    )
    out = tmp_path / "out"
    assert main(["--config", cfg, "--out", str(out), "calibrate-drag"]) == 0
    art = read_json(out / "calibrate-drag" / "params.json")
    jsonschema.validate(art, schemas.STAGE_ARTIFACT)
    assert art["cost"] > 0.99

    # the calibrated pulse is a good X/2 gate on its own
    assert main(["--config", cfg, "--out", str(out), "simulate-pulse", "--noiseless", str(out / "calibrate-drag" / "params.json")]) == 0
    report = read_json(out / "simulate-pulse" / "simulation.json")
    assert report["fidelity_vs"]["X/2"] > 0.999


def test_calibrated_n20_pulse_fidelity(tmp_path):
    cfg = write_config(tmp_path / "c.json", {"drag": {"n_samples": 20}, "cmaes": {"max_iter": 20}})
    out = tmp_path / "out"
    assert main(["--config", cfg, "--out", str(out), "calibrate-drag"]) == 0
    assert main(["--config", cfg, "--out", str(out), "simulate-pulse", "--noiseless", str(out / "calibrate-drag" / "params.json")]) == 0
    assert read_json(out / "simulate-pulse" / "simulation.json")["fidelity_vs"]["X/2"] > 0.999


def test_artifacts_reproducible(tmp_path, monkeypatch):
    cfg = write_config(tmp_path / "c.json", FAST)
    monkeypatch.setenv("LEAKOPT_OUT", str(tmp_path / "env"))
    assert main(["--config", cfg, "--seed", "11", "calibrate-drag"]) == 0
    assert main(["--config", cfg, "--seed", "11", "--threads", "3", "--out", str(tmp_path / "b"), "calibrate-drag"]) == 0
    a = read_json(tmp_path / "env" / "calibrate-drag" / "run.json")
    b = read_json(tmp_path / "b" / "calibrate-drag" / "run.json")
    jsonschema.validate(a, schemas.RUN_MANIFEST)
    assert a == b
    assert a["config"]["cost"]["seed"] == 11
    assert {"params.json", "trace.jsonl", "candidates.csv", "pulse.csv", "pulse.json", "awg.csv"} <= set(a["outputs"])
    for line in (tmp_path / "b" / "calibrate-drag" / "trace.jsonl").read_text().splitlines():
        jsonschema.validate(json.loads(line), schemas.TRACE_RECORD)
    wall = read_json(tmp_path / "b" / "calibrate-drag" / "walltime.json")
    assert wall["total_s"] > 0

    # rerunning from the snapshot alone gives the same outputs
    snap = write_config(tmp_path / "snap.json", a["config"])
    assert main(["--config", snap, "--out", str(tmp_path / "c"), "calibrate-drag"]) == 0
    assert read_json(tmp_path / "c" / "calibrate-drag" / "run.json") == a


@pytest.mark.parametrize("n, dim", [(10, 23), (26, 55)])
def test_optimize_pwc_dimension(tmp_path, n, dim):
    cfg = write_config(tmp_path / "c.json", {**FAST, "drag": {"n_samples": n}, "cmaes": {"max_iter": 2, "pwc_max_iter": 2}})
    out = tmp_path / "out"
    assert main(["--config", cfg, "--out", str(out), "calibrate-drag"]) == 0
    assert main(["--config", cfg, "--out", str(out), "optimize-pwc"]) == 0
    art = read_json(out / "optimize-pwc" / "params.json")
    jsonschema.validate(art, schemas.STAGE_ARTIFACT)
    assert 3 + len(art["params"]["a"]) + len(art["params"]["b"]) == dim
    rows = list(csv.reader((out / "optimize-pwc" / "candidates.csv").open()))
    assert len(rows) > 1
    first = json.loads((out / "optimize-pwc" / "trace.jsonl").read_text().splitlines()[0])
    assert len(first["mean"]) == dim
    env = list(csv.DictReader((out / "optimize-pwc" / "envelopes.csv").open()))
    assert len(env) == n and set(env[0]) == {"index", "t_ns", "base_re", "base_im", "opt_re", "opt_im"}


def test_optimize_pwc_never_worse_than_its_start(tmp_path):
    cfg = write_config(
        tmp_path / "c.json",
        {"noise": {"t1_us": None, "t2_us": None}, "cost": {"objective": "fidelity"}, "drag": {"n_samples": 15},
         "cmaes": {"max_iter": 8, "pwc_max_iter": 4}},
    )
    out = tmp_path / "out"
    assert main(["--config", cfg, "--out", str(out), "calibrate-drag"]) == 0
    assert main(["--config", cfg, "--out", str(out), "optimize-pwc"]) == 0
    drag = read_json(out / "calibrate-drag" / "params.json")
    pwc = read_json(out / "optimize-pwc" / "params.json")
    assert pwc["cost"] >= drag["cost"]


def test_optimize_pwc_sample_mismatch(tmp_path):
    cfg10 = write_config(tmp_path / "c10.json", {**FAST, "cmaes": {"max_iter": 1}})
    cfg12 = write_config(tmp_path / "c12.json", {**FAST, "drag": {"n_samples": 12}})
    out = tmp_path / "out"
    assert main(["--config", cfg10, "--out", str(out), "calibrate-drag"]) == 0
    assert main(["--config", cfg10, "--out", str(out), "optimize-pwc"]) == 0
    assert main(["--config", cfg12, "--out", str(out), "rb", str(out / "optimize-pwc" / "params.json")]) == 2


def ideal_pulse_file(tmp_path):
    # a pi/2-area real pulse is an exact X/2 gate on a noiseless two-level system
    pulse = tmp_path / "ideal.csv"
    write_pulse(pulse, SampledPulse(np.full(10, (math.pi / 2) / (10 * DT)), DT))
    cfg = write_config(
        tmp_path / "ideal_config.json",
        {"device": {"d": 2}, "noise": {"t1_us": None, "t2_us": None}, "rb": {"K": 4, "shots": 200}},
    )
    return pulse, cfg


def test_rb_command(tmp_path):
    pulse, cfg = ideal_pulse_file(tmp_path)
    out = tmp_path / "out"
    assert main(["--config", cfg, "--out", str(out), "rb", str(pulse)]) == 0
    rows = list(csv.DictReader((out / "rb" / "rb_curve.csv").open()))
    assert list(rows[0]) == ["m", "p0_mean", "p0_err"]
    assert len(rows) == 10
    assert all(float(r["p0_mean"]) == 1.0 for r in rows)
    fit = read_json(out / "rb" / "rb_fit.json")
    jsonschema.validate(fit, schemas.RB_FIT)
    assert fit["F_avg"] > 0.9999


def test_leakage_rb_command(tmp_path, capsys):
    pulse, cfg = ideal_pulse_file(tmp_path)
    out = tmp_path / "out"
    assert main(["--config", cfg, "--out", str(out), "leakage-rb", str(pulse), str(pulse)]) == 0
    table = capsys.readouterr().out
    assert "L1" in table and "F_avg" in table
    a = read_json(out / "leakage-rb" / "ideal_leakage.json")
    b = read_json(out / "leakage-rb" / "ideal-2_leakage.json")
    jsonschema.validate(a, schemas.LEAKAGE_RESULT)
    assert a == b
    assert a["L1"] < 1e-4
    rows = list(csv.DictReader((out / "leakage-rb" / "comparison.csv").open()))
    assert len(rows) == 2 and {"L1", "one_minus_lambda2", "F_avg"} <= set(rows[0])


def test_profile_command(tmp_path):
    cfg = write_config(tmp_path / "c.json", {**FAST, "profile": {"lambdas": [4, 8, 16, 32], "setup_latency_ms": 50}})
    out = tmp_path / "out"
    assert main(["--config", cfg, "--out", str(out), "profile"]) == 0
    report = read_json(out / "profile" / "profile.json")
    jsonschema.validate(report, schemas.PROFILE_REPORT)
    assert [r["lambda"] for r in report["records"]] == [4, 8, 16, 32]
    for r in report["records"]:
        assert abs(r["category_sum_s"] - r["iteration_s"]) < 0.05 * r["iteration_s"]
        assert r["categories_s"]["setup"] >= 0.05
