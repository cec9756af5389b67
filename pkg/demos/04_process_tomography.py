"""
Process tomography of a trained gate
====================================

Simulate the prepare-and-measure experiment on a trained stack, reconstruct
the Choi operator by maximum likelihood and compare chi matrices.
"""

import numpy as np

from modeforge import (DESK_GRID, PhaseLayerStack, TrainConfig, chi_from_choi, chi_from_unitary,
                       default_basis, mle_reconstruct, mub_states, process_fidelity,
                       simulate_tomography, standard_gate, train_d2nn)

gate = standard_gate("H1")
basis = default_basis(3, DESK_GRID)
stack, _ = train_d2nn(gate, basis, PhaseLayerStack.zeros(DESK_GRID, 4, 41e-3, 1.5),
                      TrainConfig(epochs=300, precision="single"))

probes = mub_states(3)
for label, source, kw in [("ideal gate", gate, {}), ("trained optics", stack, {"basis": basis}),
                          ("optics, 1000 shots", stack, {"basis": basis, "shots": 1000})]:
    rec = simulate_tomography(source, probes, **kw)
    e = mle_reconstruct(rec)
    chi = chi_from_choi(e)
    f = process_fidelity(chi_from_unitary(gate), chi)
    print(f"{label:20s} fidelity {f:.5f}  MLE iterations {e.iterations}  "
          f"min eigenvalue {e.min_eigenvalue():.1e}")

print("theory chi (real part, rounded):")
print(np.round(chi_from_unitary(gate).chi.real, 3))
