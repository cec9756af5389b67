"""
Self-configuration: identifying a gate and finding the layer spacing
====================================================================

A tomography record tells which of several candidate gates is loaded.
A five-point search then recovers the layer spacing a stack was trained at.
"""

import numpy as np

from modeforge import (DESK_GRID, GateProblem, PhaseLayerStack, SpacingSearchConfig, TrainConfig,
                       default_basis, identify_gate, mub_states, simulate_tomography,
                       spacing_search, spacing_visibility, standard_gate, train_d2nn)

candidates = [standard_gate(n) for n in ("H1", "H2", "H3", "X1", "X2")]
for loaded in ("H2", "X1"):
    rec = simulate_tomography(standard_gate(loaded), mub_states(3), shots=2000, seed=1)
    res = identify_gate(rec, candidates)
    print(f"loaded {loaded}: identified {res.best}",
          {k: round(v, 3) for k, v in res.fidelities.items()})

gate = standard_gate("X1")
basis = default_basis(3, DESK_GRID)
stack, _ = train_d2nn(gate, basis, PhaseLayerStack.zeros(DESK_GRID, 4, 41e-3, 1.5),
                      TrainConfig(epochs=300, precision="single"))
v_of_s = spacing_visibility(stack, GateProblem.build(gate, basis))

cfg = SpacingSearchConfig(estimated_range=(30e-3, 50e-3), range_threshold=(1e-3, 200e-3),
                          spacing_threshold=0.1e-3)
res = spacing_search(v_of_s, cfg)
for i, step in enumerate(res.steps):
    print(i, step.branch, np.round(step.samples * 1e3, 3), np.round(step.values, 5))
print(f"best spacing {res.best_spacing * 1e3:.3f} mm, exit: {res.exit_reason}")
