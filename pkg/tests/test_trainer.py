import numpy as np
import pytest

from modeforge import _fft
from modeforge.field import ComplexField, GridMismatchError, GridSpec
from modeforge.gates import ModeBasis, mub_states, qutrit_specs, standard_gate
from modeforge.layers import PhaseLayerStack
from modeforge.trainer import (AdamState, GateProblem, History, TrainConfig, adam_step,
                               energy_loss, evaluate, gradient, loss_and_gradient,
                               phase_smoothness, train_d2nn, training_loss, visibility,
                               wfm_train)

from conftest import SMALL_WAIST


def tiny_problem(qutrit_basis, name="X1"):
    return GateProblem.build(standard_gate(name), qutrit_basis)


def test_train_config_validation():
    for bad in [dict(epochs=0), dict(learning_rate=0), dict(energy_weight=-1),
                dict(offset_sigma=-1), dict(init="ones"), dict(precision="half")]:
        with pytest.raises(ValueError):
            TrainConfig(**bad)
    assert TrainConfig().model_blur == 0
    assert TrainConfig(blur_correction=True, blur_sigma=0.7).model_blur == 0.7


def test_adam_first_step_moves_by_learning_rate():
    p = np.zeros(5)
    g = np.array([1.0, -2.0, 3.0, -0.5, 1e-3])
    new, state = adam_step(p, g, AdamState.zeros_like(p), 0.01)
    assert np.allclose(new, -0.01 * np.sign(g), rtol=1e-4)
    assert state.step == 1


def test_adam_matches_reference_recursion(rng):
    p = rng.normal(size=4)
    ref_m = ref_v = np.zeros(4)
    ref = p.copy()
    state = AdamState.zeros_like(p)
    for t in range(1, 6):
        g = rng.normal(size=4)
        p, state = adam_step(p, g, state, 0.05)
        ref_m = 0.9 * ref_m + 0.1 * g
        ref_v = 0.999 * ref_v + 0.001 * g * g
        ref = ref - 0.05 * (ref_m / (1 - 0.9 ** t)) / (np.sqrt(ref_v / (1 - 0.999 ** t)) + 1e-8)
    assert np.allclose(p, ref, atol=1e-14)


@pytest.mark.parametrize("energy_weight", [0.0, 0.5])
@pytest.mark.parametrize("blur_sigma", [0.0, 0.6])
def test_gradient_matches_finite_differences(energy_weight, blur_sigma, rng):
    grid = GridSpec(16, 16, 24e-6)
    basis = ModeBasis.from_specs(qutrit_specs(0.04e-3), grid)
    prob = GateProblem.build(standard_gate("H1"), basis)
    stack = PhaseLayerStack.random(grid, 2, 2e-3, pad=1.5, seed=3)
    _, g, _ = loss_and_gradient(stack, prob.inputs, prob.targets, energy_weight, blur_sigma)
    h = 1e-6
    for _ in range(10):
        l, y, x = rng.integers(2), rng.integers(16), rng.integers(16)
        vals = []
        for sgn in (1, -1):
            ph = np.array(stack.phases)
            ph[l, y, x] += sgn * h
            vals.append(loss_and_gradient(stack, prob.inputs, prob.targets, energy_weight,
                                          blur_sigma, phases=ph)[0])
        fd = (vals[0] - vals[1]) / (2 * h)
        assert abs(fd - g[l, y, x]) <= 1e-4 * max(abs(fd), 1e-3 * np.max(np.abs(g)))


def test_gradient_wrapper_shape(qutrit_basis, small_grid):
    prob = tiny_problem(qutrit_basis)
    stack = PhaseLayerStack.zeros(small_grid, 2, 5e-3)
    g = gradient(stack, prob.inputs, prob.targets)
    assert g.shape == stack.phases.shape


def test_training_loss_is_l2_distance(qutrit_basis, small_grid):
    prob = tiny_problem(qutrit_basis)
    fields = [ComplexField(small_grid, a) for a in prob.targets]
    assert training_loss(fields, fields) == 0
    shifted = [f * 1j for f in fields]
    # ||i t - t||^2 = 2 for unit-norm targets
    assert training_loss(shifted, fields) == pytest.approx(2.0)
    half = [f * np.sqrt(0.5) for f in fields]
    loss = training_loss(half, fields, energy_weight=1.0)
    assert loss == pytest.approx((1 - np.sqrt(0.5)) ** 2 + 0.5)


def test_visibility_cases(qutrit_basis):
    m = qutrit_basis.modes
    assert visibility([m[0], m[1]], [m[0], m[1]]) == pytest.approx([1, 1])
    # orthogonal to its own target but overlapping another target
    assert visibility([m[1]], [m[0]], qutrit_basis)[0] == pytest.approx(0, abs=1e-12)
    mixed = (m[0] + m[1]) * np.sqrt(0.5)
    assert visibility([mixed], [m[0]], qutrit_basis)[0] == pytest.approx(0.5)


def test_visibility_is_global_phase_invariant(qutrit_basis, rng):
    m = qutrit_basis.modes
    out = m[0] * 0.9 + m[2] * 0.3j
    ref = visibility([out], [m[0]], qutrit_basis)[0]
    for phi in rng.uniform(0, 2 * np.pi, 5):
        assert visibility([out * np.exp(1j * phi)], [m[0]], qutrit_basis)[0] == pytest.approx(ref, abs=1e-12)


def test_energy_loss(qutrit_basis):
    f = qutrit_basis.modes[0]
    assert energy_loss(f, f) == 0
    assert energy_loss(f, f * 0.5) == pytest.approx(0.75)
    with pytest.raises(ValueError):
        energy_loss(0.0, f)


def test_problem_dimension_checks(qutrit_basis):
    with pytest.raises(Exception):
        GateProblem.build(standard_gate("CNOT"), qutrit_basis)


def test_training_improves_and_is_deterministic(qutrit_basis, small_grid):
    prob = tiny_problem(qutrit_basis)
    stack0 = PhaseLayerStack.zeros(small_grid, 2, 5e-3, pad=1.5)
    cfg = TrainConfig(epochs=40, learning_rate=0.05)
    s1, h1 = train_d2nn(None, None, stack0, cfg, problem=prob)
    s2, h2 = train_d2nn(None, None, stack0, cfg, problem=prob)
    assert np.array_equal(s1.phases, s2.phases)
    assert len(h1.records) == 41
    loss = h1.column("loss")
    assert loss[-1] < 0.5 * loss[0]
    assert h1.final.mean_visibility > h1.metrics[0].mean_visibility
    assert evaluate(s1, prob).mean_visibility == pytest.approx(h1.final.mean_visibility)


def test_thread_count_does_not_change_results(qutrit_basis, small_grid):
    prob = tiny_problem(qutrit_basis)
    stack0 = PhaseLayerStack.zeros(small_grid, 2, 5e-3, pad=1.5)
    cfg = TrainConfig(epochs=5, offset_sigma=20e-6, seed=3)
    out = []
    for n in (1, 4):
        _fft.set_threads(n)
        out.append(train_d2nn(None, None, stack0, cfg, problem=prob)[0].phases)
    _fft.set_threads(None)
    assert np.array_equal(out[0], out[1])


def test_offset_training_depends_on_seed(qutrit_basis, small_grid):
    prob = tiny_problem(qutrit_basis)
    stack0 = PhaseLayerStack.zeros(small_grid, 2, 5e-3, pad=1.5)
    a = train_d2nn(None, None, stack0, TrainConfig(epochs=3, offset_sigma=30e-6, seed=1), problem=prob)[0]
    b = train_d2nn(None, None, stack0, TrainConfig(epochs=3, offset_sigma=30e-6, seed=2), problem=prob)[0]
    assert not np.array_equal(a.phases, b.phases)


def test_single_precision_training_tracks_double(qutrit_basis, small_grid):
    prob = tiny_problem(qutrit_basis)
    stack0 = PhaseLayerStack.zeros(small_grid, 2, 5e-3, pad=1.5)
    _, hd = train_d2nn(None, None, stack0, TrainConfig(epochs=20), problem=prob)
    _, hs = train_d2nn(None, None, stack0, TrainConfig(epochs=20, precision="single"), problem=prob)
    assert hs.final.mean_visibility == pytest.approx(hd.final.mean_visibility, abs=1e-3)


def test_sgd_and_unknown_optimizer(qutrit_basis, small_grid):
    prob = tiny_problem(qutrit_basis)
    stack0 = PhaseLayerStack.zeros(small_grid, 1, 5e-3)
    train_d2nn(None, None, stack0, TrainConfig(epochs=2), problem=prob, optimizer="sgd")
    with pytest.raises(ValueError):
        train_d2nn(None, None, stack0, TrainConfig(epochs=1), problem=prob, optimizer="lbfgs")


def test_grid_mismatch(qutrit_basis):
    stack0 = PhaseLayerStack.zeros(GridSpec(16, 16), 1)
    with pytest.raises(GridMismatchError):
        train_d2nn(standard_gate("X1"), qutrit_basis, stack0, TrainConfig(epochs=1))


def test_wfm_improves_visibility(qutrit_basis, small_grid):
    prob = tiny_problem(qutrit_basis)
    stack0 = PhaseLayerStack.zeros(small_grid, 2, 5e-3, pad=1.5)
    before = evaluate(stack0, prob).mean_visibility
    stack, hist = wfm_train(None, None, stack0, 10, problem=prob)
    assert len(hist.records) == 10
    assert hist.final.mean_visibility > before
    assert evaluate(stack, prob).mean_visibility == pytest.approx(hist.final.mean_visibility)
    _, coherent = wfm_train(None, None, stack0, 3, problem=prob, align_phases=False)
    assert coherent.final.mean_visibility > before


def test_history_csv(tmp_path, qutrit_basis, small_grid):
    prob = tiny_problem(qutrit_basis)
    _, hist = train_d2nn(None, None, PhaseLayerStack.zeros(small_grid, 1, 5e-3),
                         TrainConfig(epochs=3), problem=prob)
    hist.write_csv(tmp_path / "h.csv", include_wall=False)
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "epoch,loss,mean_visibility,mean_energy_loss,wall_ms"
    assert len(lines) == 5
    assert all(l.endswith(",0") for l in lines[1:])


def test_phase_smoothness(small_grid):
    assert phase_smoothness(PhaseLayerStack.zeros(small_grid, 1)) == 0
    assert phase_smoothness(PhaseLayerStack.random(small_grid, 1, seed=0)) > 1


def test_adam_shape_mismatch():
    with pytest.raises(ValueError):
        adam_step(np.zeros(3), np.zeros(4), AdamState.zeros_like(np.zeros(3)), 0.1)
