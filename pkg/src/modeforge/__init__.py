"""Simulation toolkit for phase-only multi-plane optics acting on spatial-mode qudits.

The main entry points are re-exported here; see the submodules for the rest.
"""

from ._fft import get_threads, set_threads
from .field import (DESK_GRID, PAPER_GRID, ApertureTooSmallError, ComplexField, GridMismatchError,
                    GridSpec, ModeSpec, beam_radius, gaussian_beam, lg_mode, overlap, propagate,
                    rayleigh_range)
from .gates import (STANDARD_GATES, DimensionMismatchError, GateSpec, ModeBasis, StateSet,
                    StateVector, UnknownGateError, compose, decode, default_basis, encode,
                    mub_states, overcomplete_4d, standard_gate, tensor, training_states)
from .layers import (PerturbationSpec, PhaseLayerStack, forward, perturb, scale_pixels,
                     zernike, zernike_surface)
from .protocols import (SpacingSearchConfig, SweepBase, SweepReport, deutsch_gate, deutsch_run,
                        product_bases_4d, train_deutsch,
                        identify_gate, run_sweep, spacing_search, spacing_visibility)
from .tomography import (ChoiOperator, ProcessMatrix, TomographyRecord, chi_from_choi,
                         chi_from_unitary, choi_from_unitary, mle_reconstruct, process_fidelity,
                         simulate_tomography)
from .trainer import (GateProblem, History, Metrics, TrainConfig, evaluate, gradient,
                      train_d2nn, visibility, wfm_train)

__all__ = [name for name in dir() if not name.startswith("_")]
