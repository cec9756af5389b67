"""Experiments assembled from the optics, training and tomography modules."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .field import GridSpec
from .gates import (GateSpec, ModeBasis, StateSet, StateVector, compose, decode, default_basis,
                    encode, overcomplete_4d, standard_gate, tensor)
from .layers import PerturbationSpec, PhaseLayerStack, forward, perturb, scale_pixels
from .tomography import (chi_from_choi, chi_from_unitary, default_basis_name, mle_reconstruct,
                         process_fidelity)
from .trainer import GateProblem, TrainConfig, evaluate, train_d2nn

# -- Deutsch algorithm --------------------------------------------------------

ORACLES = {"constant": "I4", "balanced": "CNOT"}
OUTCOME_LABELS = ("|0>x|0>y", "|0>x|1>y", "|1>x|0>y", "|1>x|1>y")


def deutsch_gate(oracle):
    """Oracle followed by H (x) H, compressed into a single 4-d unitary."""
    try:
        o = standard_gate(ORACLES[oracle])
    except KeyError:
        raise ValueError(f"oracle must be 'constant' or 'balanced', got {oracle!r}") from None
    h = standard_gate("H2D")
    hh = tensor(h, h)
    return compose([o, hh])


def deutsch_input():
    """(H (x) H)|0>_x|1>_y, prepared directly as the input field."""
    h = standard_gate("H2D").matrix
    v = np.kron(h @ [1, 0], h @ [0, 1])
    return StateVector(v, "|+>x|->y")


@dataclass(frozen=True)
class DeutschResult:
    oracle: str
    mode: str
    probabilities: np.ndarray  # over OUTCOME_LABELS

    @property
    def residual(self):
        return float(1.0 - self.probabilities.sum())

    @property
    def verdict(self):
        p_x1 = self.probabilities[2] + self.probabilities[3]
        return "balanced" if p_x1 > 0.5 else "constant"

    def as_dict(self):
        return {"oracle": self.oracle, "mode": self.mode, "verdict": self.verdict,
                "residual": self.residual,
                "probabilities": dict(zip(OUTCOME_LABELS, map(float, self.probabilities)))}


def deutsch_run(oracle, mode="ideal", stack=None, basis=None):
    """Measurement distribution of the one-query Deutsch circuit.

    ``ideal`` applies the gate matrix. ``trained`` encodes the prepared state
    into a field, runs it through ``stack`` and projects onto the four
    two-qubit modes; the shortfall from one is light scattered out of the
    basis.
    """
    psi = deutsch_input()
    if mode == "ideal":
        out = deutsch_gate(oracle).matrix @ psi.coefficients
        return DeutschResult(oracle, mode, np.abs(out) ** 2)
    if mode != "trained":
        raise ValueError(f"unknown mode {mode!r}")
    if stack is None:
        raise ValueError("trained mode needs a stack trained for the Deutsch gate")
    deutsch_gate(oracle)  # validates the oracle name
    basis = basis or default_basis(4, stack.grid)
    dec = decode(forward(stack, encode(psi, basis)), basis)
    return DeutschResult(oracle, mode, np.abs(dec.coefficients) ** 2)


DEUTSCH_LAYERS = 8


def product_bases_4d():
    """The ZZ, XX and YY product bases: 12 of the 36 overcomplete states.

    Three complete bases, with their relative phases, determine a unitary on
    the span. The set contains the Deutsch input |+>|->.
    """
    full = overcomplete_4d()
    keep = [i for i, g in enumerate(full.groups) if g in (0, 4, 8)]
    return StateSet(tuple(full[i] for i in keep), tuple(full.groups[i] for i in keep))


def train_deutsch(oracle, stack0, config=None, basis=None, states=None):
    """Train ``stack0`` for the compressed Deutsch gate of ``oracle``.

    Four layers at 41 mm leave about 15% of the light outside the two-qubit
    modes for this gate, so the protocol is meant to run with
    ``DEUTSCH_LAYERS`` layers; training on ``product_bases_4d`` keeps that
    affordable.
    """
    basis = basis or default_basis(4, stack0.grid)
    states = product_bases_4d() if states is None else states
    return train_d2nn(deutsch_gate(oracle), basis, stack0, config, states=states)


# -- spacing search -------------------------------------------------------------

@dataclass(frozen=True)
class SpacingSearchConfig:
    estimated_range: tuple
    range_threshold: tuple
    spacing_threshold: float

    def __post_init__(self):
        e0, e1 = self.estimated_range
        t0, t1 = self.range_threshold
        if not e0 < e1:
            raise ValueError("estimated range must be increasing")
        if not t0 < t1:
            raise ValueError("range threshold must be increasing")
        if not self.spacing_threshold > 0:
            raise ValueError("spacing threshold must be positive")


@dataclass
class SpacingStep:
    samples: np.ndarray
    values: np.ndarray
    branch: str


@dataclass
class SpacingResult:
    best_spacing: float
    best_value: float
    interval: tuple
    exit_reason: str  # "converged", "range_threshold" or "no_branch_matched"
    steps: list = field(default_factory=list)

    @property
    def at_boundary(self):
        return self.exit_reason != "converged"

    def as_dict(self):
        return {"best_spacing_m": self.best_spacing, "best_value": self.best_value,
                "interval_m": list(self.interval), "exit_reason": self.exit_reason,
                "steps": [{"samples_m": s.samples.tolist(), "values": s.values.tolist(),
                           "branch": s.branch} for s in self.steps]}


def spacing_search(evaluate_fn, cfg, max_steps=200):
    """Five-point spacing search.

    Each step samples five equally spaced points of the current range. If the
    values rise monotonically from the first to the last point (minimum
    first, maximum last) the range moves up and doubles; the mirrored case
    moves it down. An interior maximum narrows the range to its two
    neighbours. The search stops once the range is shorter than the spacing
    threshold, when any sample leaves the allowed range, or when the maximum
    sits at an end without the matching minimum at the other end.
    """
    r0, r1 = map(float, cfg.estimated_range)
    t0, t1 = map(float, cfg.range_threshold)
    steps = []
    best = (-np.inf, None)
    reason = "max_steps"
    for _ in range(max_steps):
        s = r0 + np.arange(5) * (r1 - r0) / 4
        if np.any(s <= t0) or np.any(s >= t1):
            reason = "range_threshold"
            break
        if r1 - r0 < cfg.spacing_threshold:
            reason = "converged"
            break
        v = np.array([float(evaluate_fn(x)) for x in s])
        i_min, i_max = int(np.argmin(v)), int(np.argmax(v))
        if v[i_max] > best[0]:
            best = (float(v[i_max]), float(s[i_max]))
        if i_min == 0 and i_max == 4:
            branch = "extend_up"
            r0, r1 = s[0], s[0] + 2 * (s[4] - s[0])
        elif i_min == 4 and i_max == 0:
            branch = "extend_down"
            r0, r1 = s[4] - 2 * (s[4] - s[0]), s[4]
        elif 0 < i_max < 4:
            branch = "narrow"
            r0, r1 = s[i_max - 1], s[i_max + 1]
        else:
            steps.append(SpacingStep(s, v, "none"))
            reason = "no_branch_matched"
            break
        steps.append(SpacingStep(s, v, branch))
    return SpacingResult(best[1], best[0], (float(r0), float(r1)), reason, steps)


def spacing_visibility(stack, problem):
    """V(s): mean visibility with every inter-layer spacing set to ``s``."""
    design = stack.spacings[1]

    def v(s):
        return evaluate(perturb(stack, PerturbationSpec(dz=s - design)), problem).mean_visibility
    return v


# -- gate identification -------------------------------------------------------

@dataclass
class IdentifyResult:
    best: str
    fidelities: dict
    tie: bool
    choi: object = None

    def as_dict(self):
        return {"best": self.best, "tie": self.tie, "fidelities": self.fidelities}


def identify_gate(rec, candidates, basis_name=None):
    """Reconstruct the process once and rank ``candidates`` by process fidelity."""
    candidates = list(candidates)
    if not candidates:
        raise ValueError("no candidate gates")
    for c in candidates:
        if c.dim != rec.dim:
            raise ValueError(f"candidate {c.name} has dim {c.dim}, record has {rec.dim}")
    basis_name = basis_name or default_basis_name(rec.dim)
    choi = mle_reconstruct(rec)
    chi_e = chi_from_choi(choi, basis_name)
    fids = [process_fidelity(chi_from_unitary(c, basis_name), chi_e) for c in candidates]
    i = int(np.argmax(fids))
    tie = sum(1 for f in fids if abs(f - fids[i]) <= 1e-12) > 1
    table = {}
    for c, f in zip(candidates, fids):
        table.setdefault(c.name, f)
    return IdentifyResult(candidates[i].name, table, tie, choi)


# -- parameter sweeps ------------------------------------------------------------

TRAINED_AXES = ("epochs", "spacing", "layers_fixed_spacing", "layers_fixed_total",
                "offset_sigma", "energy_weight")
FROZEN_AXES = ("pixels_fix_aperture", "pixels_fix_pitch", "gray_levels", "zernike_amp",
               "dx", "dz")
SWEEP_AXES = TRAINED_AXES + FROZEN_AXES
SWEEP_COLUMNS = ("point_value", "mean_visibility", "min_visibility", "max_visibility",
                 "mean_energy_loss", "min_energy_loss", "max_energy_loss")


@dataclass
class SweepBase:
    """Everything a sweep point needs: the gate, grid, geometry and training set-up."""

    gate: GateSpec
    grid: GridSpec
    waist: float = 0.3e-3
    n_layers: int = 4
    spacing: float = 41e-3
    pad: float = 2.0
    train: TrainConfig = field(default_factory=TrainConfig)
    frozen: Optional[PhaseLayerStack] = None
    zernike_terms: tuple = (4, 15)

    def basis(self, grid=None):
        return default_basis(self.gate.dim, grid or self.grid, self.waist)

    def problem(self, grid=None):
        return GateProblem.build(self.gate, self.basis(grid))

    def fresh_stack(self, n_layers=None, spacing=None):
        return PhaseLayerStack.zeros(self.grid, n_layers or self.n_layers,
                                     spacing or self.spacing, self.pad)

    def frozen_stack(self):
        if self.frozen is None:
            self.frozen, _ = train_d2nn(self.gate, self.basis(), self.fresh_stack(), self.train)
        return self.frozen


@dataclass
class SweepReport:
    axis: str
    points: np.ndarray
    metrics: list

    def rows(self):
        out = []
        for p, m in zip(self.points, self.metrics):
            s = m.summary()
            out.append([float(p)] + [s[c] for c in SWEEP_COLUMNS[1:]])
        return out

    def mean_visibility(self):
        return np.array([m.mean_visibility for m in self.metrics])

    def mean_energy_loss(self):
        return np.array([m.mean_energy_loss for m in self.metrics])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SWEEP_COLUMNS)
            for row in self.rows():
                w.writerow([repr(v) for v in row])

    def summary(self, config=None):
        return {"axis": self.axis, "points": [float(p) for p in self.points],
                "mean_visibility": self.mean_visibility().tolist(),
                "mean_energy_loss": self.mean_energy_loss().tolist(),
                "config": config or {}}


def run_sweep(axis, points, base):
    """Evaluate gate performance along one axis.

    Training-parameter axes retrain per point with seed ``base seed + index``
    (the ``epochs`` axis reads the metrics of one run at each epoch count,
    which equals retraining with that many epochs). Perturbation axes reuse
    the frozen stack of ``base``.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}")
    points = np.sort(np.asarray(points, dtype=float))
    metrics = []
    if axis == "epochs":
        if np.any(points < 0) or np.any(points != np.round(points)):
            raise ValueError("epoch counts must be non-negative integers")
        cfg = replace(base.train, epochs=max(1, int(points.max())))
        _, hist = train_d2nn(base.gate, base.basis(), base.fresh_stack(), cfg)
        metrics = [hist.metrics[int(p)] for p in points]
        return SweepReport(axis, points, metrics)
    if axis in TRAINED_AXES:
        problem = base.problem()
        for i, p in enumerate(points):
            cfg = replace(base.train, seed=base.train.seed + i)
            if axis == "spacing":
                if p <= 0:
                    raise ValueError("spacing must be positive")
                stack0 = base.fresh_stack(spacing=p)
            elif axis == "layers_fixed_spacing":
                stack0 = base.fresh_stack(n_layers=_count(p))
            elif axis == "layers_fixed_total":
                n = _count(p)
                total = base.spacing * (base.n_layers + 1)
                stack0 = base.fresh_stack(n_layers=n, spacing=total / (n + 1))
            elif axis == "offset_sigma":
                stack0 = base.fresh_stack()
                cfg = replace(cfg, offset_sigma=p)
            else:  # energy_weight
                stack0 = base.fresh_stack()
                cfg = replace(cfg, energy_weight=p)
            stack, _ = train_d2nn(base.gate, base.basis(), stack0, cfg, problem=problem)
            metrics.append(evaluate(stack, problem))
        return SweepReport(axis, points, metrics)
    frozen = base.frozen_stack()
    problem = base.problem()
    for p in points:
        if axis in ("pixels_fix_aperture", "pixels_fix_pitch"):
            mode = "fix_aperture" if axis == "pixels_fix_aperture" else "fix_pitch"
            stack = scale_pixels(frozen, mode, _count(p))
            metrics.append(evaluate(stack, base.problem(stack.grid)))
            continue
        if axis == "gray_levels":
            spec = PerturbationSpec(gray_levels=_count(p))
        elif axis == "zernike_amp":
            spec = PerturbationSpec(zernike=tuple((j, p) for j in base.zernike_terms))
        elif axis == "dx":
            spec = PerturbationSpec(dx=p)
        else:
            spec = PerturbationSpec(dz=p)
        metrics.append(evaluate(perturb(frozen, spec), problem))
    return SweepReport(axis, points, metrics)


def _count(p):
    if p != int(p) or p < 1:
        raise ValueError(f"expected a positive integer, got {p}")
    return int(p)
