"""
The Deutsch algorithm with two OAM-encoded qubits
=================================================

The oracle and the final Hadamards are compressed into a single stack; the
input (H x H)|0>|1> is prepared directly as a field.

Four layers saturate near P = 0.84 on these gates, so the stack here has
eight. Training uses three product bases (12 states), which fix the whole
4x4 unitary; the 36-state overcomplete set gives the same stack more slowly.
"""

from modeforge import DESK_GRID, PhaseLayerStack, TrainConfig, default_basis
from modeforge.protocols import DEUTSCH_LAYERS, deutsch_run, train_deutsch

for oracle in ("constant", "balanced"):
    print(oracle, "ideal:", deutsch_run(oracle).as_dict()["probabilities"])

basis = default_basis(4, DESK_GRID)
cfg = TrainConfig(epochs=500, learning_rate=0.1, energy_weight=1.0, precision="single")
for oracle in ("constant", "balanced"):
    stack0 = PhaseLayerStack.zeros(DESK_GRID, DEUTSCH_LAYERS, 41e-3, 1.5)
    stack, _ = train_deutsch(oracle, stack0, cfg, basis)
    res = deutsch_run(oracle, "trained", stack, basis)
    print(oracle, "trained:", {k: round(v, 4) for k, v in res.as_dict()["probabilities"].items()},
          "residual", round(res.residual, 4), "verdict", res.verdict)
