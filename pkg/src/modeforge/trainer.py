"""Phase-layer optimisation: loss, adjoint gradient, Adam, wavefront matching and metrics."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .field import ComplexField, GridMismatchError, propagate_array
from .gates import DimensionMismatchError, StateSet, project_array, training_states
from .layers import PhaseLayerStack, blur, forward_array, shift_array

HISTORY_FIELDS = ("epoch", "loss", "mean_visibility", "mean_energy_loss", "wall_ms")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    learning_rate: float = 0.01
    energy_weight: float = 0.0
    offset_sigma: float = 0.0  # meters
    seed: int = 0
    blur_correction: bool = False
    blur_sigma: float = 0.5  # pixels, used when blur_correction is set
    init: str = "zero"  # or "random"
    precision: str = "double"  # "single" runs the optics in complex64

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.energy_weight < 0:
            raise ValueError("energy_weight must be >= 0")
        if self.offset_sigma < 0:
            raise ValueError("offset_sigma must be >= 0")
        if self.init not in ("zero", "random"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.precision not in ("single", "double"):
            raise ValueError(f"unknown precision {self.precision!r}")

    @property
    def model_blur(self):
        return self.blur_sigma if self.blur_correction else 0.0


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, params, **kw):
        return cls(np.zeros_like(params), np.zeros_like(params), **kw)


def adam_step(params, grads, state, lr):
    """One bias-corrected Adam update. Returns ``(new_params, new_state)``."""
    if grads.shape != params.shape or state.first_moment.shape != params.shape:
        raise ValueError(f"shape mismatch: params {params.shape}, grads {grads.shape}, "
                         f"moments {state.first_moment.shape}")
    t = state.step + 1
    m = state.beta1 * state.first_moment + (1 - state.beta1) * grads
    v = state.beta2 * state.second_moment + (1 - state.beta2) * grads ** 2
    m_hat = m / (1 - state.beta1 ** t)
    v_hat = v / (1 - state.beta2 ** t)
    new = params - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new, replace(state, first_moment=m, second_moment=v, step=t)


def sgd_step(params, grads, lr):
    return params - lr * grads


# -- problem set-up -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GateProblem:
    """Input fields and gate-mapped target fields for a set of probe states."""

    gate: object
    basis: object
    states: StateSet
    inputs: np.ndarray
    targets: np.ndarray
    target_coeffs: np.ndarray

    @classmethod
    def build(cls, gate, basis, states=None):
        if gate.dim != basis.dim:
            raise DimensionMismatchError(f"gate dim {gate.dim} != basis dim {basis.dim}")
        states = training_states(gate.dim) if states is None else states
        if states.dim != gate.dim:
            raise DimensionMismatchError(f"state dim {states.dim} != gate dim {gate.dim}")
        c_in = states.matrix().T  # (S, d)
        c_out = c_in @ gate.matrix.T
        modes = basis.stacked()
        inputs = np.tensordot(c_in, modes, axes=1)
        targets = np.tensordot(c_out, modes, axes=1)
        return cls(gate, basis, states, inputs, targets, c_out)

    @property
    def grid(self):
        return self.basis.grid

    def on_grid(self, basis):
        """Same gate and states re-encoded on another mode basis (e.g. rescaled grid)."""
        return GateProblem.build(self.gate, basis, self.states)


# -- metrics ------------------------------------------------------------------

@dataclass(frozen=True)
class Metrics:
    visibility: np.ndarray
    energy_loss: np.ndarray
    mse: float

    @property
    def mean_visibility(self):
        return float(np.mean(self.visibility))

    @property
    def mean_energy_loss(self):
        return float(np.mean(self.energy_loss))

    def summary(self):
        return {
            "mean_visibility": self.mean_visibility,
            "min_visibility": float(np.min(self.visibility)),
            "max_visibility": float(np.max(self.visibility)),
            "mean_energy_loss": self.mean_energy_loss,
            "min_energy_loss": float(np.min(self.energy_loss)),
            "max_energy_loss": float(np.max(self.energy_loss)),
            "mse": self.mse,
        }


def _as_array(fields):
    if isinstance(fields, np.ndarray):
        return fields
    fields = list(fields)
    if not fields:
        raise ValueError("empty field list")
    g = fields[0].grid
    for f in fields:
        if f.grid != g:
            raise GridMismatchError("fields live on different grids")
    return np.stack([f.amplitudes for f in fields])


def visibility(outputs, targets, basis=None):
    """Crosstalk-normalised visibility of each output.

    ``V_i = |<t_i|o_i>|^2 / sum_j |<t_j|o_i>|^2``. When the targets are not a
    complete orthonormal set (e.g. all 12 MUB states at once) pass the mode
    ``basis``; the denominator then sums over the basis modes, which spans the
    same space.
    """
    outs = list(outputs)
    tgts = list(targets)
    if not outs:
        raise ValueError("visibility of an empty set")
    if len(outs) != len(tgts):
        raise ValueError("outputs and targets differ in length")
    v = np.empty(len(outs))
    for i, o in enumerate(outs):
        num = abs(_overlap(tgts[i], o)) ** 2
        refs = basis.modes if basis is not None else tgts
        den = sum(abs(_overlap(t, o)) ** 2 for t in refs)
        v[i] = num / den if den > 0 else 0.0
    return v


def _overlap(a, b):
    return complex(np.vdot(a.amplitudes, b.amplitudes) * a.grid.pitch ** 2)


def energy_loss(inp, out):
    """Normalised energy waste ``(|E_in|^2 - |E_out|^2) / |E_in|^2``."""
    pin = inp.power if isinstance(inp, ComplexField) else float(inp)
    if pin <= 0:
        raise ValueError("input field carries no power")
    pout = out.power if isinstance(out, ComplexField) else float(out)
    return (pin - pout) / pin


def _powers(a, pitch):
    return np.sum(np.abs(a) ** 2, axis=(-2, -1)) * pitch ** 2


def metrics_from_outputs(problem, outputs):
    pitch = problem.grid.pitch
    c = project_array(outputs, problem.basis)  # (S, d)
    num = np.abs(np.sum(problem.target_coeffs.conj() * c, axis=1)) ** 2
    den = np.sum(np.abs(c) ** 2, axis=1)
    vis = np.where(den > 0, num / np.where(den > 0, den, 1), 0.0)
    p_in = _powers(problem.inputs, pitch)
    p_out = _powers(outputs, pitch)
    mse = float(np.mean(_powers(outputs - problem.targets, pitch)))
    return Metrics(vis, (p_in - p_out) / p_in, mse)


def evaluate(stack, problem, blur_sigma=0.0):
    """Metrics of ``stack`` on every state of ``problem``."""
    if stack.grid != problem.grid:
        raise GridMismatchError("stack and problem grids differ")
    return metrics_from_outputs(problem, forward_array(stack, problem.inputs, blur_sigma))


# -- loss and gradient ----------------------------------------------------------

def training_loss(outputs, targets, energy_weight=0.0, inputs=None):
    """Field MSE plus an optional weighted energy-loss term.

    The MSE term is ``(1/n^2) sum |E - E_hat|^2`` with pixel samples scaled so
    a unit-norm field has unit mean pixel power, which makes it the squared L2
    distance ``||E - E_hat||^2``. It is averaged over states; the energy term
    is ``energy_weight`` times the mean energy loss. Input powers default to
    the target powers (a unitary gate preserves them).
    """
    out = _as_array(outputs)
    tgt = _as_array(targets)
    if out.shape != tgt.shape:
        raise ValueError(f"outputs {out.shape} and targets {tgt.shape} differ")
    pitch = _pitch_of(outputs, targets)
    base = float(np.mean(_powers(out - tgt, pitch)))
    if energy_weight == 0:
        return base
    p_in = _powers(_as_array(inputs) if inputs is not None else tgt, pitch)
    e = (p_in - _powers(out, pitch)) / p_in
    return base + energy_weight * float(np.mean(e))


def _pitch_of(*groups):
    for g in groups:
        if isinstance(g, np.ndarray):
            continue
        for f in g:
            return f.grid.pitch
    raise ValueError("pitch unknown for raw arrays")


def loss_and_gradient(stack, inputs, targets, energy_weight=0.0, blur_sigma=0.0, phases=None):
    """Loss, per-pixel gradient w.r.t. every layer phase, and the outputs.

    Adjoint method: fields are propagated forward once, the output residual
    is propagated backwards with the adjoint (``-distance``) operator, and
    each layer's gradient is ``-2 pitch^2 Im(m * B(sum_s conj(a_s) v_s))``
    where ``v`` is the arriving field, ``a`` the adjoint field just after the
    layer, ``m = exp(i phi)`` and ``B`` the (self-adjoint) blur model.
    """
    phases = stack.phases if phases is None else phases
    pitch = stack.grid.pitch
    S = inputs.shape[0]
    out, arriving, mods = forward_array(stack, inputs, blur_sigma, keep_planes=True, phases=phases)
    resid = out - targets
    p_in = _powers(inputs, pitch)
    p_out = _powers(out, pitch)
    loss = float(np.mean(_powers(resid, pitch)))
    g = resid / S
    if energy_weight:
        loss += energy_weight * float(np.mean((p_in - p_out) / p_in))
        g = g - (energy_weight / S) * out / p_in[:, None, None]
    grads = np.empty_like(phases)
    a = propagate_array(g, stack.grid, -stack.spacings[-1], stack.pad)
    for l in range(stack.n_layers - 1, -1, -1):
        c = np.sum(np.conj(a) * arriving[l], axis=0)
        if blur_sigma > 0:
            grads[l] = -2 * pitch ** 2 * np.imag(np.exp(1j * phases[l]) * blur(c, blur_sigma))
        else:
            grads[l] = -2 * pitch ** 2 * np.imag(mods[l] * c)
        if l:
            a = propagate_array(np.conj(mods[l]) * a, stack.grid, -stack.spacings[l], stack.pad)
    return loss, grads, out


def gradient(stack, inputs, targets, config=None):
    """Per-pixel loss gradient for each layer (same shape as ``stack.phases``)."""
    config = config or TrainConfig()
    _, grads, _ = loss_and_gradient(stack, _as_array(inputs), _as_array(targets),
                                    config.energy_weight, config.model_blur)
    return grads


# -- training loops -------------------------------------------------------------

@dataclass
class History:
    records: list = field(default_factory=list)
    metrics: list = field(default_factory=list)

    def append(self, epoch, loss, m, wall_ms):
        self.records.append({"epoch": epoch, "loss": loss, "mean_visibility": m.mean_visibility,
                             "mean_energy_loss": m.mean_energy_loss, "wall_ms": wall_ms})
        self.metrics.append(m)

    @property
    def final(self):
        return self.metrics[-1]

    def column(self, name):
        return np.array([r[name] for r in self.records])

    def write_csv(self, path, include_wall=True):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(HISTORY_FIELDS)
            for r in self.records:
                w.writerow([r["epoch"], repr(r["loss"]), repr(r["mean_visibility"]),
                            repr(r["mean_energy_loss"]),
                            f"{r['wall_ms']:.3f}" if include_wall else "0"])


def _initial_phases(stack0, config):
    if config.init == "random":
        rng = np.random.default_rng(config.seed)
        return rng.uniform(0, 2 * np.pi, stack0.phases.shape)
    return np.array(stack0.phases, copy=True)


def train_d2nn(gate, basis, stack0, config=None, states=None, problem=None, optimizer="adam",
               callback=None):
    """Train phase layers so that every probe state maps to its gate image.

    Full-batch: each epoch uses all probe states. With ``offset_sigma`` set,
    each epoch draws one Gaussian lateral offset and evaluates the loss and
    gradient with all layers shifted by it. Returns ``(stack, history)``;
    the history holds one entry per epoch (metrics of the parameters used in
    that epoch) followed by the final evaluation.
    """
    config = config or TrainConfig()
    problem = problem or GateProblem.build(gate, basis, states)
    if stack0.grid != problem.grid:
        raise GridMismatchError("initial stack and mode basis live on different grids")
    rng = np.random.default_rng(config.seed)
    phases = _initial_phases(stack0, config)
    adam = AdamState.zeros_like(phases)
    blur_sigma = config.model_blur
    hist = History()
    pitch = stack0.grid.pitch
    ctype = np.complex64 if config.precision == "single" else complex
    inputs = problem.inputs.astype(ctype)
    targets = problem.targets.astype(ctype)
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        shift = rng.normal(0.0, config.offset_sigma) / pitch if config.offset_sigma > 0 else 0.0
        used = shift_array(phases, shift, axis=-1) if shift else phases
        loss, grads, out = loss_and_gradient(stack0, inputs, targets,
                                             config.energy_weight, blur_sigma, phases=used)
        if shift:
            grads = shift_array(grads, -shift, axis=-1)
        if optimizer == "adam":
            phases, adam = adam_step(phases, grads, adam, config.learning_rate)
        elif optimizer == "sgd":
            phases = sgd_step(phases, grads, config.learning_rate)
        else:
            raise ValueError(f"unknown optimizer {optimizer!r}")
        m = metrics_from_outputs(problem, out)
        hist.append(epoch, loss, m, (time.perf_counter() - t0) * 1e3)
        if callback is not None:
            callback(epoch, loss, m)
    stack = stack0.replace(phases=phases)
    out = forward_array(stack, problem.inputs, blur_sigma)
    final_loss = _loss_value(problem, out, config.energy_weight)
    hist.append(config.epochs, final_loss, metrics_from_outputs(problem, out), 0.0)
    return stack, hist


def _loss_value(problem, out, energy_weight):
    pitch = problem.grid.pitch
    base = float(np.mean(_powers(out - problem.targets, pitch)))
    if not energy_weight:
        return base
    p_in = _powers(problem.inputs, pitch)
    return base + energy_weight * float(np.mean((p_in - _powers(out, pitch)) / p_in))


def backward_fields(stack, targets, phases=None):
    """Targets propagated backwards to just after each layer (adjoint path)."""
    phases = stack.phases if phases is None else phases
    mods = np.exp(1j * phases)
    b = propagate_array(targets, stack.grid, -stack.spacings[-1], stack.pad)
    fields = [None] * stack.n_layers
    for l in range(stack.n_layers - 1, -1, -1):
        fields[l] = b
        if l:
            b = propagate_array(np.conj(mods[l]) * b, stack.grid, -stack.spacings[l], stack.pad)
    return fields


def wfm_sweep(stack, inputs, targets, phases=None, align_phases=True):
    """One front-to-back wavefront-matching sweep; returns the new phases.

    Each layer takes the phase ``-arg(sum_s w_s * conj(b_s) * f_s)`` where
    ``f`` is the forward field arriving at the layer and ``b`` the target
    field propagated backwards to the same plane. With ``align_phases`` the
    weight ``w_s = exp(-i arg <b_s|m f_s>)`` removes each state's global
    overlap phase (the usual multi-port form); otherwise ``w_s = 1`` and the
    states add coherently. Layers after the one being updated keep their
    values from the start of the sweep.
    """
    phases = np.array(stack.phases if phases is None else phases, copy=True)
    back = backward_fields(stack, targets, phases)
    u = inputs
    for l in range(stack.n_layers):
        u = propagate_array(u, stack.grid, stack.spacings[l], stack.pad)
        prod = np.conj(back[l]) * u
        if align_phases:
            c = np.sum(prod * np.exp(1j * phases[l]), axis=(-2, -1))
            w = np.exp(-1j * np.angle(c))
            s = np.tensordot(w, prod, axes=1)
        else:
            s = np.sum(prod, axis=0)
        nz = np.abs(s) > 0
        phases[l] = np.where(nz, -np.angle(s), phases[l])
        u = u * np.exp(1j * phases[l])
    return phases


def wfm_train(gate, basis, stack0, iterations=50, states=None, problem=None, align_phases=True):
    """Wavefront-matching baseline: repeated sweeps. Returns ``(stack, history)``."""
    problem = problem or GateProblem.build(gate, basis, states)
    if stack0.grid != problem.grid:
        raise GridMismatchError("initial stack and mode basis live on different grids")
    hist = History()
    phases = np.array(stack0.phases, copy=True)
    for it in range(iterations):
        t0 = time.perf_counter()
        phases = wfm_sweep(stack0, problem.inputs, problem.targets, phases, align_phases)
        out = forward_array(stack0, problem.inputs, phases=phases)
        hist.append(it, _loss_value(problem, out, 0.0), metrics_from_outputs(problem, out),
                    (time.perf_counter() - t0) * 1e3)
    return stack0.replace(phases=phases), hist


def phase_smoothness(stack):
    """Mean magnitude of the wrapped phase gradient between neighbouring pixels."""
    ph = stack.phases
    dx = np.angle(np.exp(1j * np.diff(ph, axis=-1)))
    dy = np.angle(np.exp(1j * np.diff(ph, axis=-2)))
    return float(0.5 * (np.mean(np.abs(dx)) + np.mean(np.abs(dy))))
