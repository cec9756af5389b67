import numpy as np
import pytest

from modeforge import protocols
from modeforge.gates import GateSpec, mub_states, standard_gate
from modeforge.layers import PhaseLayerStack
from modeforge.protocols import (OUTCOME_LABELS, SpacingSearchConfig, SweepBase, deutsch_gate,
                                 deutsch_input, deutsch_run, identify_gate, run_sweep,
                                 spacing_search)
from modeforge.tomography import simulate_tomography
from modeforge.trainer import TrainConfig, train_d2nn

from conftest import SMALL_GRID, SMALL_WAIST

MM = 1e-3


def test_deutsch_ideal_outcomes():
    const = deutsch_run("constant")
    bal = deutsch_run("balanced")
    assert const.probabilities[OUTCOME_LABELS.index("|0>x|1>y")] == pytest.approx(1, abs=1e-9)
    assert bal.probabilities[OUTCOME_LABELS.index("|1>x|1>y")] == pytest.approx(1, abs=1e-9)
    assert const.verdict == "constant" and bal.verdict == "balanced"
    assert abs(const.residual) < 1e-9


def test_deutsch_gate_is_hadamards_after_oracle():
    h = standard_gate("H2D").matrix
    hh = np.kron(h, h)
    assert np.allclose(deutsch_gate("balanced").matrix, hh @ standard_gate("CNOT").matrix)
    assert np.allclose(deutsch_gate("constant").matrix, hh)
    assert np.allclose(np.abs(deutsch_input().coefficients), 0.5)


def test_deutsch_errors():
    with pytest.raises(ValueError):
        deutsch_run("balanced", "trained")
    with pytest.raises(ValueError):
        deutsch_run("sometimes")
    with pytest.raises(ValueError):
        deutsch_run("constant", "analog")


def test_deutsch_trained_mode_reports_residual(small_grid):
    # an untrained flat stack: probabilities stay a sub-normalised distribution
    from modeforge.gates import ModeBasis, two_qubit_specs
    basis = ModeBasis.from_specs(two_qubit_specs(SMALL_WAIST * 0.8), small_grid)
    res = deutsch_run("balanced", "trained", PhaseLayerStack.zeros(small_grid, 1, 2e-3), basis)
    assert res.probabilities.sum() <= 1 + 1e-9
    assert res.residual >= -1e-9


def gaussian_peak(centre, width=5 * MM):
    return lambda s: float(np.exp(-((s - centre) / width) ** 2))


def test_spacing_search_finds_synthetic_peak():
    cfg = SpacingSearchConfig((30 * MM, 60 * MM), (1 * MM, 200 * MM), 0.1 * MM)
    res = spacing_search(gaussian_peak(41 * MM), cfg)
    assert res.exit_reason == "converged" and not res.at_boundary
    assert abs(res.best_spacing - 41 * MM) <= 0.1 * MM
    assert res.interval[1] - res.interval[0] < 0.1 * MM
    assert res.interval[0] <= 41 * MM <= res.interval[1]


def test_spacing_trace_has_five_equal_samples():
    cfg = SpacingSearchConfig((10 * MM, 20 * MM), (1 * MM, 200 * MM), 0.05 * MM)
    res = spacing_search(gaussian_peak(33 * MM), cfg)
    for step in res.steps:
        assert len(step.samples) == 5
        assert np.allclose(np.diff(step.samples, 2), 0, atol=1e-12)
    assert res.steps[0].branch == "extend_up"
    assert abs(res.best_spacing - 33 * MM) <= 0.05 * MM


def test_spacing_extends_down():
    cfg = SpacingSearchConfig((40 * MM, 60 * MM), (1 * MM, 200 * MM), 0.1 * MM)
    res = spacing_search(gaussian_peak(27 * MM), cfg)
    assert res.steps[0].branch == "extend_down"
    assert res.exit_reason == "converged"
    assert abs(res.best_spacing - 27 * MM) <= 0.1 * MM


def test_monotone_function_hits_range_threshold():
    cfg = SpacingSearchConfig((30 * MM, 60 * MM), (1 * MM, 200 * MM), 0.1 * MM)
    res = spacing_search(lambda s: s, cfg)
    assert res.exit_reason == "range_threshold"
    assert res.at_boundary
    assert all(s.branch == "extend_up" for s in res.steps)


def test_no_branch_matched():
    # maximum at the first sample, minimum in the interior
    cfg = SpacingSearchConfig((30 * MM, 60 * MM), (1 * MM, 200 * MM), 0.1 * MM)
    values = {0: 1.0, 1: 0.0, 2: 0.5, 3: 0.6, 4: 0.7}
    res = spacing_search(lambda s: values[int(round((s - 30 * MM) / (7.5 * MM)))], cfg)
    assert res.exit_reason == "no_branch_matched"
    assert res.best_spacing == pytest.approx(30 * MM)


def test_spacing_config_validation():
    with pytest.raises(ValueError):
        SpacingSearchConfig((2, 1), (0, 3), 0.1)
    with pytest.raises(ValueError):
        SpacingSearchConfig((1, 2), (3, 0), 0.1)
    with pytest.raises(ValueError):
        SpacingSearchConfig((1, 2), (0, 3), 0)


def test_evaluate_errors_propagate():
    def boom(s):
        raise RuntimeError("evaluation failed")
    with pytest.raises(RuntimeError):
        spacing_search(boom, SpacingSearchConfig((1, 2), (0, 3), 0.1))


def test_identify_ideal_h1_against_h3():
    rec = simulate_tomography(standard_gate("H1"), mub_states(3))
    res = identify_gate(rec, [standard_gate("H1"), standard_gate("H3")])
    assert res.best == "H1" and not res.tie
    assert res.fidelities["H1"] >= 0.999
    assert res.fidelities["H3"] < res.fidelities["H1"]


def test_identify_after_switch():
    rec = simulate_tomography(standard_gate("H3"), mub_states(3))
    assert identify_gate(rec, [standard_gate(n) for n in ("H1", "H2", "H3")]).best == "H3"


def test_identify_tie_returns_first_listed():
    rec = simulate_tomography(standard_gate("X1"), mub_states(3))
    first = GateSpec(standard_gate("X1").matrix, "first")
    second = GateSpec(standard_gate("X1").matrix, "second")
    res = identify_gate(rec, [first, second])
    assert res.best == "first" and res.tie


def test_identify_runs_one_reconstruction(monkeypatch):
    calls = []
    real = protocols.mle_reconstruct
    monkeypatch.setattr(protocols, "mle_reconstruct", lambda rec: calls.append(1) or real(rec))
    rec = simulate_tomography(standard_gate("X2"), mub_states(3))
    identify_gate(rec, [standard_gate(n) for n in ("H1", "H2", "H3", "X1", "X2")])
    assert len(calls) == 1


def test_identify_errors():
    rec = simulate_tomography(standard_gate("X2"), mub_states(3))
    with pytest.raises(ValueError):
        identify_gate(rec, [])
    with pytest.raises(ValueError):
        identify_gate(rec, [standard_gate("CNOT")])


@pytest.fixture(scope="module")
def tiny_base():
    base = SweepBase(standard_gate("X1"), SMALL_GRID, SMALL_WAIST, n_layers=2, spacing=5 * MM,
                     pad=1.5, train=TrainConfig(epochs=30, learning_rate=0.05))
    base.frozen_stack()
    return base


def test_sweep_gray_levels(tiny_base, tmp_path):
    rep = run_sweep("gray_levels", [32, 2, 8], tiny_base)
    assert list(rep.points) == [2, 8, 32]
    v = rep.mean_visibility()
    assert v[0] < v[2]
    rep.write_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == ("point_value,mean_visibility,min_visibility,max_visibility,"
                        "mean_energy_loss,min_energy_loss,max_energy_loss")
    assert len(lines) == 4
    s = rep.summary({"gate": "X1"})
    assert s["config"] == {"gate": "X1"} and s["axis"] == "gray_levels"


def test_sweep_dz_peaks_at_design(tiny_base):
    rep = run_sweep("dz", [-2 * MM, 0.0, 2 * MM], tiny_base)
    assert np.argmax(rep.mean_visibility()) == 1


@pytest.mark.parametrize("axis,points", [("dx", [0.0, 48e-6]), ("zernike_amp", [0.0, 0.5]),
                                         ("pixels_fix_pitch", [32, 48]),
                                         ("pixels_fix_aperture", [32, 64])])
def test_frozen_axes_start_from_frozen_stack(tiny_base, axis, points):
    rep = run_sweep(axis, points, tiny_base)
    ref = tiny_base.frozen_stack()
    from modeforge.trainer import evaluate
    v0 = evaluate(ref, tiny_base.problem()).mean_visibility
    assert rep.mean_visibility()[0] == pytest.approx(v0, abs=1e-9)


def test_epoch_axis_matches_retraining(tiny_base):
    rep = run_sweep("epochs", [5, 10], tiny_base)
    from dataclasses import replace
    stack, hist = train_d2nn(tiny_base.gate, tiny_base.basis(), tiny_base.fresh_stack(),
                             replace(tiny_base.train, epochs=5))
    assert rep.metrics[0].mean_visibility == pytest.approx(hist.final.mean_visibility, abs=1e-12)


@pytest.mark.parametrize("axis,points", [("energy_weight", [0.0, 1.0]), ("spacing", [4 * MM]),
                                         ("layers_fixed_spacing", [1, 2]),
                                         ("layers_fixed_total", [1]), ("offset_sigma", [10e-6])])
def test_trained_axes_run(tiny_base, axis, points):
    from dataclasses import replace
    base = SweepBase(tiny_base.gate, tiny_base.grid, tiny_base.waist, 2, tiny_base.spacing,
                     1.5, replace(tiny_base.train, epochs=3))
    rep = run_sweep(axis, points, base)
    assert len(rep.metrics) == len(points)
    assert all(0 <= v <= 1 for v in rep.mean_visibility())


def test_sweep_errors(tiny_base):
    with pytest.raises(ValueError):
        run_sweep("wavelength", [1], tiny_base)
    with pytest.raises(ValueError):
        run_sweep("gray_levels", [2.5], tiny_base)
    with pytest.raises(ValueError):
        run_sweep("epochs", [-1], tiny_base)
    with pytest.raises(ValueError):
        run_sweep("spacing", [-1.0], tiny_base)


def test_product_bases_4d_spans_three_groups_and_contains_deutsch_input():
    from modeforge.protocols import deutsch_input, product_bases_4d
    states = product_bases_4d()
    assert len(states) == 12
    inp = deutsch_input().coefficients
    overlaps = [abs(np.vdot(s.coefficients, inp)) for s in states]
    assert max(overlaps) == pytest.approx(1.0, abs=1e-12)
    for g in range(3):
        block = np.array([s.coefficients for s in states[4 * g:4 * g + 4]])
        np.testing.assert_allclose(block.conj() @ block.T, np.eye(4), atol=1e-12)
