import csv
import json

import numpy as np
import pytest

from modeforge.cli import ExperimentConfig, main, resolve_config
from modeforge.layers import PhaseLayerStack

TINY = ["--set", "nx=32", "--set", "waist_m=8e-05", "--set", "spacing_m=0.005",
        "--set", "n_layers=2", "--set", "epochs=4", "--set", "learning_rate=0.05"]


def run(args, tmp_path, name):
    out = tmp_path / name
    code = main(list(args) + ["--out", str(out)])
    return code, out


def test_config_defaults_and_overrides(tmp_path):
    cfg = resolve_config(None, ["gate=H2", "epochs=7", "zernike=[[4, 0.1]]"])
    assert cfg.gate == "H2" and cfg.epochs == 7
    assert cfg.perturbation().zernike == ((4, 0.1),)
    assert ExperimentConfig().n_layers == 4 and ExperimentConfig().spacing_m == 41e-3
    with pytest.raises(ValueError):
        resolve_config(None, ["colour=blue"])
    with pytest.raises(ValueError):
        resolve_config(None, ["epochs"])
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"gate": "X2", "seed": 3}))
    cfg = resolve_config(str(p), ["seed=4"])
    assert (cfg.gate, cfg.seed) == ("X2", 4)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(pitch_m=-1)
    with pytest.raises(FileNotFoundError):
        ExperimentConfig(stack="/nonexistent/stack")


def test_unknown_gate_exits_nonzero(tmp_path, capsys):
    code, _ = run(["train", "--set", "gate=X9"], tmp_path, "bad")
    assert code != 0
    assert "unknown gate" in capsys.readouterr().err


def test_train_writes_artifacts_and_is_deterministic(tmp_path):
    code, a = run(["train"] + TINY, tmp_path, "a")
    assert code == 0
    code, b = run(["train"] + TINY, tmp_path, "b")
    assert code == 0
    for name in ["stack/stack.json", "stack/layer_00.f64", "stack/layer_01.f64",
                 "history.csv", "metrics.json"]:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    metrics = json.loads((a / "metrics.json").read_text())
    assert set(metrics) >= {"mean_visibility", "mean_energy_loss", "min_visibility"}
    rows = list(csv.DictReader(open(a / "history.csv")))
    assert len(rows) == 5
    stack = PhaseLayerStack.load(a / "stack")
    assert stack.n_layers == 2


def test_rerun_from_config_echo(tmp_path):
    code, a = run(["train"] + TINY, tmp_path, "a")
    echo = json.loads((a / "config.json").read_text())
    echo["out_dir"] = str(tmp_path / "again")
    (tmp_path / "echo.json").write_text(json.dumps(echo))
    assert main(["train", "--config", str(tmp_path / "echo.json")]) == 0
    assert (a / "stack/layer_01.f64").read_bytes() == (tmp_path / "again/stack/layer_01.f64").read_bytes()


def test_thread_flag_does_not_change_output(tmp_path, monkeypatch):
    monkeypatch.delenv("MODEFORGE_THREADS", raising=False)
    run(["train", "--threads", "1"] + TINY, tmp_path, "t1")
    monkeypatch.setenv("MODEFORGE_THREADS", "3")
    run(["train", "--threads", "1"] + TINY, tmp_path, "t3")
    assert (tmp_path / "t1/stack/layer_00.f64").read_bytes() == (tmp_path / "t3/stack/layer_00.f64").read_bytes()


def test_tomography_ideal(tmp_path):
    code, out = run(["tomography", "--set", "ideal=true", "--set", "gate=X1"], tmp_path, "t")
    assert code == 0
    assert json.loads((out / "fidelity.json").read_text())["fidelity"] >= 0.999
    assert (out / "record.csv").read_text().startswith("probe_index,projector_index,frequency")
    chi = json.loads((out / "chi.json").read_text())
    assert chi["basis"] == "GellMann" and len(chi["chi"]) == 9


def test_tomography_dimension_mismatch(tmp_path, capsys):
    code, a = run(["train"] + TINY, tmp_path, "a")
    code, _ = run(["tomography", "--set", "gate=CNOT", "--set", f"stack=\"{a / 'stack'}\""],
                  tmp_path, "t")
    assert code != 0
    assert "dimension" in capsys.readouterr().err


def test_tomography_on_trained_stack(tmp_path):
    _, a = run(["train"] + TINY, tmp_path, "a")
    code, out = run(["tomography", "--set", f"stack=\"{a / 'stack'}\""] + TINY, tmp_path, "t")
    assert code == 0
    assert 0 < json.loads((out / "fidelity.json").read_text())["fidelity"] <= 1 + 1e-9


def test_deutsch_command(tmp_path):
    code, out = run(["deutsch", "--set", "oracle=balanced"], tmp_path, "d")
    assert code == 0
    rep = json.loads((out / "deutsch.json").read_text())
    assert rep["verdict"] == "balanced"
    assert max(rep["probabilities"], key=rep["probabilities"].get) == "|1>x|1>y"


def test_spacing_command_synthetic(tmp_path):
    code, out = run(["spacing", "--set", "synthetic_peak_m=0.041"], tmp_path, "s")
    assert code == 0
    rep = json.loads((out / "spacing.json").read_text())
    assert abs(rep["best_spacing_m"] - 0.041) <= 1e-4
    assert rep["exit_reason"] == "converged"


def test_identify_command(tmp_path):
    code, out = run(["identify", "--set", "ideal=true", "--set", "gate=H2"], tmp_path, "i")
    assert code == 0
    assert json.loads((out / "identify.json").read_text())["best"] == "H2"


def test_export_and_custom_gate(tmp_path):
    code, out = run(["export-gate", "--set", "gate=H1"], tmp_path, "g")
    assert code == 0
    gate_file = out / "gate.json"
    code, t = run(["tomography", "--set", "ideal=true", "--set", f"gate_file=\"{gate_file}\""],
                  tmp_path, "t")
    assert code == 0
    assert json.loads((t / "fidelity.json").read_text())["gate"] == "H1"


def test_sweep_command(tmp_path):
    code, out = run(["sweep", "--set", "axis=gray_levels", "--set", "points=[4, 16]"] + TINY,
                    tmp_path, "sw")
    assert code == 0
    assert (out / "sweep_gray_levels.csv").exists()
    summary = json.loads((out / "sweep_gray_levels.json").read_text())
    assert summary["config"]["axis"] == "gray_levels"


def test_compare_wfm_command(tmp_path):
    code, out = run(["compare-wfm", "--set", "wfm_iterations=3"] + TINY, tmp_path, "c")
    assert code == 0
    rep = json.loads((out / "compare.json").read_text())
    assert set(rep) == {"d2nn", "wfm"}
    assert (out / "wfm_history.csv").exists() and (out / "d2nn_history.csv").exists()


def test_missing_stack_file(tmp_path, capsys):
    code, _ = run(["deutsch", "--set", "mode=trained", "--set", "stack=\"/no/such\""], tmp_path, "x")
    assert code != 0
