"""Command-line entry point: ``modeforge <command> [--config FILE] [--set key=value ...]``.

Every command resolves a flat JSON config (defaults, then the config file,
then ``--set`` overrides), echoes it to ``<out_dir>/config.json`` and writes
its reports next to it. Re-running from the echo reproduces the outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

import numpy as np

from . import _fft
from .field import GridSpec
from .gates import (DimensionMismatchError, GateSpec, default_basis, mub_states, standard_gate,
                    training_states)
from .layers import PerturbationSpec, PhaseLayerStack, perturb
from .protocols import (SpacingSearchConfig, SweepBase, deutsch_gate, deutsch_run,
                        identify_gate, run_sweep, spacing_search, spacing_visibility,
                        train_deutsch)
from .tomography import (chi_from_choi, chi_from_unitary, default_basis_name, mle_reconstruct,
                         process_fidelity, simulate_tomography)
from .trainer import GateProblem, TrainConfig, evaluate, train_d2nn, wfm_train


@dataclass
class ExperimentConfig:
    # grid and modes
    nx: int = 128
    pitch_m: float = 24e-6
    wavelength_m: float = 1550e-9
    waist_m: float = 0.3e-3
    # gate: a standard name, or a JSON file written by export-gate
    gate: str = "X1"
    gate_file: Optional[str] = None
    # geometry
    n_layers: int = 4
    spacing_m: float = 41e-3
    pad: float = 1.5
    # training
    epochs: int = 500
    learning_rate: float = 0.01
    energy_weight: float = 0.0
    offset_sigma_m: float = 0.0
    blur_correction: bool = False
    blur_sigma_px: float = 0.5
    init: str = "zero"
    precision: str = "double"
    seed: int = 0
    # perturbations applied at evaluation time
    dx_m: float = 0.0
    dz_m: float = 0.0
    gray_levels: Optional[int] = None
    fringe_sigma_px: float = 0.0
    zernike: list = field(default_factory=list)  # [[noll, rms_rad], ...]
    # inputs and outputs
    out_dir: str = "modeforge-out"
    stack: Optional[str] = None
    record_wall_time: bool = False
    # tomography / identify
    ideal: bool = False
    shots: Optional[int] = None
    candidates: list = field(default_factory=lambda: ["H1", "H2", "H3", "X1", "X2"])
    # sweep
    axis: str = "gray_levels"
    points: list = field(default_factory=lambda: [4, 8, 16, 32, 64, 128, 256])
    # deutsch
    oracle: str = "balanced"
    mode: str = "ideal"
    deutsch_n_layers: int = 8
    # spacing search
    estimated_range_m: list = field(default_factory=lambda: [30e-3, 60e-3])
    range_threshold_m: list = field(default_factory=lambda: [1e-3, 200e-3])
    spacing_threshold_m: float = 1e-4
    synthetic_peak_m: Optional[float] = None
    synthetic_width_m: float = 5e-3
    # wavefront matching
    wfm_iterations: int = 50
    wfm_align_phases: bool = True

    def __post_init__(self):
        for name in ("pitch_m", "wavelength_m", "waist_m", "spacing_m", "pad"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("gate_file", "stack"):
            path = getattr(self, name)
            if path is not None and not os.path.exists(path):
                raise FileNotFoundError(f"{name}: no such file or directory: {path}")

    @property
    def grid(self):
        return GridSpec(self.nx, self.nx, self.pitch_m, self.wavelength_m)

    def train_config(self):
        return TrainConfig(epochs=self.epochs, learning_rate=self.learning_rate,
                           energy_weight=self.energy_weight, offset_sigma=self.offset_sigma_m,
                           seed=self.seed, blur_correction=self.blur_correction,
                           blur_sigma=self.blur_sigma_px, init=self.init,
                           precision=self.precision)

    def perturbation(self):
        return PerturbationSpec(dx=self.dx_m, dz=self.dz_m, gray_levels=self.gray_levels,
                                blur_sigma=self.fringe_sigma_px,
                                zernike=tuple((int(j), float(c)) for j, c in self.zernike))

    def resolve_gate(self):
        if self.gate_file:
            with open(self.gate_file) as fh:
                return GateSpec.from_json(fh.read())
        return standard_gate(self.gate)

    def basis(self, d, grid=None):
        return default_basis(d, grid or self.grid, self.waist_m)

    def fresh_stack(self):
        return PhaseLayerStack.zeros(self.grid, self.n_layers, self.spacing_m, self.pad)


_FIELD_TYPES = {f.name: f for f in fields(ExperimentConfig)}


def _parse_value(key, text):
    if key not in _FIELD_TYPES:
        raise ValueError(f"unknown config key {key!r}")
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text  # bare strings such as gate=X1


def resolve_config(config_path=None, overrides=()):
    values = {}
    if config_path:
        with open(config_path) as fh:
            values.update(json.load(fh))
        unknown = set(values) - set(_FIELD_TYPES)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
    for item in overrides:
        key, sep, text = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects key=value, got {item!r}")
        values[key.strip()] = _parse_value(key.strip(), text)
    return ExperimentConfig(**values)


# -- helpers ----------------------------------------------------------------------

def _out(cfg, name):
    os.makedirs(cfg.out_dir, exist_ok=True)
    return os.path.join(cfg.out_dir, name)


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _save_stack(cfg, stack, gate, name="stack"):
    directory = _out(cfg, name)
    stack.save(directory)
    _write_json(os.path.join(directory, "modes.json"),
                {"dim": gate.dim, "waist_m": cfg.waist_m, "gate": gate.name})
    return directory


def _load_stack(cfg, dim):
    stack = PhaseLayerStack.load(cfg.stack)
    directory = cfg.stack if os.path.isdir(cfg.stack) else os.path.dirname(cfg.stack)
    meta_path = os.path.join(directory, "modes.json")
    waist = cfg.waist_m
    if os.path.exists(meta_path):
        with open(meta_path) as fh:
            meta = json.load(fh)
        if meta["dim"] != dim:
            raise DimensionMismatchError(
                f"stack was trained for dimension {meta['dim']}, gate has dimension {dim}")
        waist = meta["waist_m"]
    return stack, default_basis(dim, stack.grid, waist)


def _train(cfg, gate, callback=None):
    basis = cfg.basis(gate.dim)
    return train_d2nn(gate, basis, cfg.fresh_stack(), cfg.train_config(), callback=callback), basis


def _trained_or_loaded(cfg, gate):
    if cfg.stack:
        return _load_stack(cfg, gate.dim)
    (stack, _), basis = _train(cfg, gate)
    _save_stack(cfg, stack, gate)
    return stack, basis


def _log(msg):
    print(msg, file=sys.stderr)


# -- commands ----------------------------------------------------------------------

def cmd_train(cfg):
    gate = cfg.resolve_gate()

    def progress(epoch, loss, m):
        if epoch % 50 == 0:
            _log(f"epoch {epoch:5d}  loss {loss:.4e}  V {m.mean_visibility:.5f}")

    (stack, hist), basis = _train(cfg, gate, progress)
    _save_stack(cfg, stack, gate)
    hist.write_csv(_out(cfg, "history.csv"), include_wall=cfg.record_wall_time)
    metrics = evaluate(perturb(stack, cfg.perturbation()), GateProblem.build(gate, basis))
    _write_json(_out(cfg, "metrics.json"), metrics.summary())
    return metrics.summary()


def cmd_tomography(cfg):
    gate = cfg.resolve_gate()
    probes = training_states(gate.dim)
    if cfg.ideal:
        rec = simulate_tomography(gate, probes, shots=cfg.shots, seed=cfg.seed)
    else:
        stack, basis = _trained_or_loaded(cfg, gate)
        rec = simulate_tomography(perturb(stack, cfg.perturbation()), probes, basis=basis,
                                  shots=cfg.shots, seed=cfg.seed)
    rec.write_csv(_out(cfg, "record.csv"))
    name = default_basis_name(gate.dim)
    choi = mle_reconstruct(rec)
    chi = chi_from_choi(choi, name)
    with open(_out(cfg, "chi.json"), "w") as fh:
        fh.write(chi.to_json())
    result = {"gate": gate.name, "fidelity": process_fidelity(chi_from_unitary(gate, name), chi),
              "mle_iterations": choi.iterations, "mle_converged": choi.converged}
    _write_json(_out(cfg, "fidelity.json"), result)
    return result


def cmd_sweep(cfg):
    gate = cfg.resolve_gate()
    base = SweepBase(gate, cfg.grid, cfg.waist_m, cfg.n_layers, cfg.spacing_m, cfg.pad,
                     cfg.train_config())
    if cfg.stack:
        base.frozen, _ = _load_stack(cfg, gate.dim)
    report = run_sweep(cfg.axis, cfg.points, base)
    report.write_csv(_out(cfg, f"sweep_{cfg.axis}.csv"))
    summary = report.summary(asdict(cfg))
    _write_json(_out(cfg, f"sweep_{cfg.axis}.json"), summary)
    return {"axis": cfg.axis, "mean_visibility": summary["mean_visibility"]}


def cmd_deutsch(cfg):
    if cfg.mode == "trained":
        gate = deutsch_gate(cfg.oracle)
        if cfg.stack:
            stack, basis = _load_stack(cfg, gate.dim)
        else:
            basis = cfg.basis(4)
            stack0 = PhaseLayerStack.zeros(cfg.grid, cfg.deutsch_n_layers, cfg.spacing_m, cfg.pad)
            stack, hist = train_deutsch(cfg.oracle, stack0, cfg.train_config(), basis)
            _save_stack(cfg, stack, gate)
            hist.write_csv(_out(cfg, "history.csv"), include_wall=cfg.record_wall_time)
        result = deutsch_run(cfg.oracle, "trained", perturb(stack, cfg.perturbation()), basis)
    else:
        result = deutsch_run(cfg.oracle, cfg.mode)
    _write_json(_out(cfg, "deutsch.json"), result.as_dict())
    return result.as_dict()


def cmd_spacing(cfg):
    search = SpacingSearchConfig(tuple(cfg.estimated_range_m), tuple(cfg.range_threshold_m),
                                 cfg.spacing_threshold_m)
    if cfg.synthetic_peak_m is not None:
        peak, width = cfg.synthetic_peak_m, cfg.synthetic_width_m

        def fn(s):
            return float(np.exp(-((s - peak) / width) ** 2))
    else:
        gate = cfg.resolve_gate()
        stack, basis = _trained_or_loaded(cfg, gate)
        fn = spacing_visibility(stack, GateProblem.build(gate, basis))
    result = spacing_search(fn, search)
    _write_json(_out(cfg, "spacing.json"), result.as_dict())
    return {"best_spacing_m": result.best_spacing, "exit_reason": result.exit_reason}


def cmd_identify(cfg):
    gate = cfg.resolve_gate()
    candidates = [standard_gate(n) for n in cfg.candidates]
    probes = training_states(gate.dim)
    if cfg.ideal:
        rec = simulate_tomography(gate, probes, shots=cfg.shots, seed=cfg.seed)
    else:
        stack, basis = _trained_or_loaded(cfg, gate)
        rec = simulate_tomography(stack, probes, basis=basis, shots=cfg.shots, seed=cfg.seed)
    result = identify_gate(rec, candidates)
    _write_json(_out(cfg, "identify.json"), result.as_dict())
    return result.as_dict()


def cmd_compare_wfm(cfg):
    gate = cfg.resolve_gate()
    basis = cfg.basis(gate.dim)
    problem = GateProblem.build(gate, basis)
    _, d2nn = train_d2nn(gate, basis, cfg.fresh_stack(), cfg.train_config(), problem=problem)
    _, wfm = wfm_train(gate, basis, cfg.fresh_stack(), cfg.wfm_iterations, problem=problem,
                       align_phases=cfg.wfm_align_phases)
    d2nn.write_csv(_out(cfg, "d2nn_history.csv"), include_wall=cfg.record_wall_time)
    wfm.write_csv(_out(cfg, "wfm_history.csv"), include_wall=cfg.record_wall_time)
    result = {"d2nn": d2nn.final.summary(), "wfm": wfm.final.summary()}
    _write_json(_out(cfg, "compare.json"), result)
    return result


def cmd_export_gate(cfg):
    gate = cfg.resolve_gate()
    path = _out(cfg, "gate.json")
    with open(path, "w") as fh:
        fh.write(gate.to_json())
    return {"gate": gate.name, "dim": gate.dim, "path": path}


COMMANDS = {
    "train": cmd_train,
    "tomography": cmd_tomography,
    "sweep": cmd_sweep,
    "deutsch": cmd_deutsch,
    "spacing": cmd_spacing,
    "identify": cmd_identify,
    "compare-wfm": cmd_compare_wfm,
    "export-gate": cmd_export_gate,
}


def build_parser():
    p = argparse.ArgumentParser(prog="modeforge", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (value parsed as JSON when possible)")
    p.add_argument("--out", help="output directory (same as --set out_dir=...)")
    p.add_argument("--threads", type=int, default=None,
                   help="FFT worker threads (default: all cores; MODEFORGE_THREADS wins)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    _fft.set_threads(args.threads)
    try:
        overrides = list(args.overrides)
        if args.out:
            overrides.append(f"out_dir={json.dumps(args.out)}")
        cfg = resolve_config(args.config, overrides)
        _write_json(_out(cfg, "config.json"), asdict(cfg))
        result = COMMANDS[args.command](cfg)
    except (ValueError, KeyError, OSError, TypeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"modeforge {args.command}: error: {msg}", file=sys.stderr)
        return 2
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
