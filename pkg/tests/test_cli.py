import json
import subprocess
import sys

import numpy as np
import pytest

from ordsel import _io
from ordsel.cli import main
from ordsel.linmodel import write_dataset_csv
from ordsel.simulation import generate, toy_spec

VERIFY_BETA = [3.0, 2.0, 1.0, 0, 0, 0, 0, 0]


def write_cfg(tmp_path, obj, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture
def toy_csv(tmp_path):
    data, _ = generate(toy_spec(0), 0)
    path = tmp_path / "toy.csv"
    write_dataset_csv(data, path)
    return str(path)


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_simulate_writes_outputs_and_manifest(tmp_path):
    cfg = write_cfg(tmp_path, {"scenario": {"name": "toy"}, "replicates": 50,
                               "kGrid": {"start": 2, "stop": 4, "step": 1}})
    out = tmp_path / "out"
    assert main(["simulate", cfg, "--out", str(out), "--seed", "7"]) == 0
    man = manifest(out)
    assert man["command"] == "simulate" and man["seed"] == 7
    names = {o["path"].split("/")[-1] for o in man["outputs"]}
    assert names == {"curve.csv", "curve.json"}
    for o in man["outputs"]:
        assert _io.sha256(o["path"]) == o["sha256"]
    assert isinstance(man["wallTimeMs"], int)


def test_rerun_gives_identical_digests(tmp_path):
    cfg = write_cfg(tmp_path, {"scenario": {"name": "toy"}, "replicates": 30, "seed": 3})
    digests = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        assert main(["simulate", cfg, "--out", str(out)]) == 0
        digests.append(sorted(o["sha256"] for o in manifest(out)["outputs"]))
    assert digests[0] == digests[1]


def test_csv_values_round_trip_exactly(tmp_path):
    cfg = write_cfg(tmp_path, {"scenario": {"name": "toy"}, "replicates": 30, "kGrid": [2, 3]})
    out = tmp_path / "out"
    assert main(["simulate", cfg, "--out", str(out)]) == 0
    table = _io.read_csv(out / "curve.csv")
    doc = json.loads((out / "curve.json").read_text())
    np.testing.assert_array_equal(table["fdr"], doc["fdr"])


def test_malformed_json_is_config_error(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"replicates": 10,\n  "scenario": }')
    assert main(["simulate", str(path), "--out", str(tmp_path)]) == 2
    assert "bad.json:2:" in capsys.readouterr().err


def test_zero_replicates_is_config_error(tmp_path):
    cfg = write_cfg(tmp_path, {"scenario": {"name": "toy"}, "replicates": 0})
    assert main(["simulate", cfg, "--out", str(tmp_path / "o")]) == 2


def test_saturated_bounds_exit_code(tmp_path):
    cfg = write_cfg(tmp_path, {"input": {"signalCoef": [1, 2, 3], "dStar": 3, "q": 3}})
    assert main(["bounds", cfg, "--out", str(tmp_path / "o")]) == 3


def test_bounds_file_is_a_sandwich(tmp_path):
    cfg = write_cfg(tmp_path, {"scenario": {"name": "toy"}, "mcSamples": 2000})
    out = tmp_path / "o"
    assert main(["bounds", cfg, "--out", str(out)]) == 0
    t = _io.read_csv(out / "bounds.csv")
    assert list(t) == ["K", "b", "B", "floor"]
    assert np.all(t["floor"] <= t["b"]) and np.all(t["b"] <= t["B"])
    assert t["B"][-1] < t["B"][0]


def test_calibrate_on_toy_csv(tmp_path, toy_csv):
    cfg = write_cfg(tmp_path, {"alpha": 0.05, "gamma": 0.1})
    out = tmp_path / "o"
    assert main(["calibrate", toy_csv, cfg, "--out", str(out)]) == 0
    res = json.loads((out / "calibration.json").read_text())
    assert 2.0 <= res["kStar"] <= 10.0
    assert 7 <= res["selectedDim"] <= 12
    model = _io.read_csv(out / "selected_model.csv")
    assert np.count_nonzero(model["beta_hat"]) == res["selectedDim"]


def test_calibrate_huge_gamma_picks_first_of_i1(tmp_path, toy_csv):
    cfg = write_cfg(tmp_path, {"gamma": 1e9})
    out = tmp_path / "o"
    assert main(["calibrate", toy_csv, cfg, "--out", str(out)]) == 0
    res = json.loads((out / "calibration.json").read_text())
    assert res["kStar"] == res["I1"][0][0]
    assert res["fallbackUsed"] is False


def test_calibration_failure_exit_code_and_curve(tmp_path, toy_csv):
    cfg = write_cfg(tmp_path, {"alpha": 1e-9})
    out = tmp_path / "o"
    assert main(["calibrate", toy_csv, cfg, "--out", str(out)]) == 4
    assert (out / "bound_curve.csv").exists()
    names = {o["path"].split("/")[-1] for o in manifest(out)["outputs"]}
    assert "bound_curve.csv" in names


def test_verify_reference_instance(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"beta": VERIFY_BETA, "mcSamples": 20_000})
    assert main(["verify", cfg, "--out", str(tmp_path / "o")]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("K,factorized")
    assert len(lines) == 5


def test_verify_boundary_dimension(tmp_path):
    beta = [3.0, 2.5, 2.0, 1.5, 1.2, 1.0, 0.8, 0.0]
    cfg = write_cfg(tmp_path, {"beta": beta, "mcSamples": 20_000})
    assert main(["verify", cfg]) == 0


def test_verify_fault_injection_fails(tmp_path):
    cfg = write_cfg(tmp_path, {"beta": VERIFY_BETA, "mcSamples": 20_000, "_fault_pr_scale": 0.5})
    assert main(["verify", cfg]) == 5


def test_thread_env_variable(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path, {"scenario": {"name": "toy"}, "replicates": 300})
    monkeypatch.setenv("ORDSEL_THREADS", "3")
    assert main(["simulate", cfg, "--out", str(tmp_path / "a")]) == 0
    monkeypatch.setenv("ORDSEL_THREADS", "1")
    assert main(["simulate", cfg, "--out", str(tmp_path / "b")]) == 0
    assert ((tmp_path / "a" / "curve.csv").read_bytes()
            == (tmp_path / "b" / "curve.csv").read_bytes())
    monkeypatch.setenv("ORDSEL_THREADS", "many")
    assert main(["simulate", cfg, "--out", str(tmp_path / "c")]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ordsel", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "simulate" in proc.stdout
